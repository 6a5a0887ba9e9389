import logging

from ..core.inverse_net import check_pairing
from ..errors import ConfigError
from ..state import PipelineState

logger = logging.getLogger(__name__)

PIPELINE_MODES = ("swap", "optim", "feedforward")


def router_node(state: PipelineState) -> dict:
    """
    Checks that the requested mode has what it needs before any encoding
    work starts: an inverse network paired with the encoder for
    "feedforward", an optimization config for "optim".
    """
    logger.info("---NODE: Router---")
    mode = state.get("mode")
    if mode not in PIPELINE_MODES:
        raise ConfigError(f"Unsupported pipeline mode: {mode}. Please use one of {', '.join(PIPELINE_MODES)}.")
    if mode == "feedforward":
        net = state.get("net")
        if net is None:
            raise ConfigError("The feedforward pipeline needs an inverse network.")
        check_pairing(net, state["encoder"])
    if mode == "optim" and state.get("optim_config") is None:
        raise ConfigError("The optimization pipeline needs an OptimConfig.")
    state["swap_config"].validate()
    logger.info("---ROUTER: decoding with '%s'---", mode)
    return {"events": ["router"]}


def route_after_swap(state: PipelineState) -> str:
    return {"optim": "optimize", "feedforward": "invert", "swap": "emit"}[state["mode"]]
