import logging

from ..core.inverse_net import invert
from ..core.optim import descend, initial_image
from ..state import PipelineState

logger = logging.getLogger(__name__)


def optimize_node(state: PipelineState) -> dict:
    """Recovers the image by gradient descent toward the swapped activations."""
    logger.info("---NODE: Optimize---")
    config = state["optim_config"].validate()
    init = initial_image(state["content"], config)
    report = descend(state["swap_result"].activations, init, state["encoder"], config)
    return {"image": report.image, "report": report, "events": ["optimize"]}


def invert_node(state: PipelineState) -> dict:
    """One forward pass of the inverse network."""
    logger.info("---NODE: Invert---")
    image = invert(state["swap_result"].activations, state["net"])
    return {"image": image, "events": ["invert"]}


def emit_node(state: PipelineState) -> dict:
    """Stops at the target activations; they are already an image when the encoder is the identity."""
    logger.info("---NODE: Emit---")
    encoder = state["encoder"]
    image = state["swap_result"].activations if not encoder.layers else None
    return {"image": image, "events": ["emit"]}
