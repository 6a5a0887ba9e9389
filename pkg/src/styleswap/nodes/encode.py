import logging

from ..core.encoder import encode
from ..state import PipelineState

logger = logging.getLogger(__name__)


def encode_node(state: PipelineState) -> dict:
    logger.info("---NODE: Encode---")
    encoder = state["encoder"]
    content_acts, _ = encode(state["content"], encoder)
    style_acts, _ = encode(state["style"], encoder)
    logger.info("---ENCODE: %s content %s style %s---", encoder.name, content_acts.shape, style_acts.shape)
    return {"content_acts": content_acts, "style_acts": style_acts, "events": ["encode"]}
