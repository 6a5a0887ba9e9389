import logging

from ..core.style_swap import run_style_swap
from ..state import PipelineState

logger = logging.getLogger(__name__)


def swap_node(state: PipelineState) -> dict:
    logger.info("---NODE: Swap---")
    result = run_style_swap(state["content_acts"], state["style_acts"], state["swap_config"])
    logger.info(
        "---SWAP: %d of %d style patches used, mean correlation %.4f---",
        result.distinct_patches, result.style_patches, result.mean_correlation,
    )
    return {"swap_result": result, "events": ["swap"]}
