from typing import Optional

from langgraph.graph import END, StateGraph

from .core.encoder import EncoderSpec
from .core.inverse_net import InverseNetSpec
from .core.optim import OptimConfig
from .core.style_swap import SwapConfig
from .core.tensor import Tensor
from .nodes.decode import emit_node, invert_node, optimize_node
from .nodes.encode import encode_node
from .nodes.router import route_after_swap, router_node
from .nodes.swap import swap_node
from .state import PipelineState


def build_graph_structure() -> StateGraph:
    """
    Builds the uncompiled pipeline graph:
    router -> encode -> swap -> optimize | invert | emit.
    """
    graph = StateGraph(PipelineState)

    graph.add_node("router", router_node)
    graph.add_node("encode", encode_node)
    graph.add_node("swap", swap_node)
    graph.add_node("optimize", optimize_node)
    graph.add_node("invert", invert_node)
    graph.add_node("emit", emit_node)

    graph.set_entry_point("router")
    graph.add_edge("router", "encode")
    graph.add_edge("encode", "swap")

    graph.add_conditional_edges(
        "swap",
        route_after_swap,
        {
            "optimize": "optimize",
            "invert": "invert",
            "emit": "emit",
        }
    )

    graph.add_edge("optimize", END)
    graph.add_edge("invert", END)
    graph.add_edge("emit", END)

    return graph


def create_pipeline():
    """Builds and compiles the pipeline graph."""
    return build_graph_structure().compile()


def run_pipeline(mode: str, content: Tensor, style: Tensor, encoder: EncoderSpec,
                 swap_config: Optional[SwapConfig] = None, optim_config: Optional[OptimConfig] = None,
                 net: Optional[InverseNetSpec] = None, pipeline=None) -> dict:
    """Runs one content/style pair through the pipeline and returns the final state."""
    pipeline = pipeline or create_pipeline()
    initial: PipelineState = {
        "mode": mode,
        "content": content,
        "style": style,
        "encoder": encoder,
        "swap_config": swap_config or SwapConfig(),
        "optim_config": optim_config if optim_config is not None or mode != "optim" else OptimConfig(),
        "net": net,
        "content_acts": None,
        "style_acts": None,
        "swap_result": None,
        "image": None,
        "report": None,
        "events": [],
    }
    return pipeline.invoke(initial)
