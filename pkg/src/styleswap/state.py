# src/styleswap/state.py
import operator
from typing import Annotated, List, Literal, Optional, TypedDict

from .core.encoder import EncoderSpec
from .core.inverse_net import InverseNetSpec
from .core.optim import OptimConfig, OptimReport
from .core.style_swap import SwapConfig, SwapResult
from .core.tensor import Tensor


class PipelineState(TypedDict):
    """
    State carried through the stylization pipeline graph.

    mode selects the decoder after the swap: "optim" runs the image
    optimization, "feedforward" the inverse network, "swap" stops at the
    target activations.
    """

    mode: Literal["swap", "optim", "feedforward"]

    content: Tensor
    style: Tensor
    encoder: EncoderSpec
    swap_config: SwapConfig
    optim_config: Optional[OptimConfig]
    net: Optional[InverseNetSpec]

    content_acts: Optional[Tensor]
    style_acts: Optional[Tensor]
    swap_result: Optional[SwapResult]

    # Decoded RGB image; for "swap" mode only set when the encoder works in RGB space.
    image: Optional[Tensor]
    report: Optional[OptimReport]

    # Names of the nodes that ran, in order.
    events: Annotated[List[str], operator.add]
