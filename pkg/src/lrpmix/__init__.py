"""Mixing-time toolkit for long-range percolation graphs on the cycle."""

__version__ = "0.1.0"

from .model import LrpGraph, ModelParams, cyclic_distance, degree2_vertices, edge_probability, sample_graph
from .chain import ChainView, MixingEstimate, mixing_time, step, tau_from, transition_prob, tv_distance
from .spectral import SpectralResult, ds_mixing_bound, second_eigenvalue
from .cut import CutReport, arc_boundary, cheeger_arcs, cheeger_tau_lower
from .electric import RegionSplit, hitting_time, region_split, solve_voltages

__all__ = [
    "LrpGraph", "ModelParams", "cyclic_distance", "degree2_vertices", "edge_probability", "sample_graph",
    "ChainView", "MixingEstimate", "mixing_time", "step", "tau_from", "transition_prob", "tv_distance",
    "SpectralResult", "ds_mixing_bound", "second_eigenvalue",
    "CutReport", "arc_boundary", "cheeger_arcs", "cheeger_tau_lower",
    "RegionSplit", "hitting_time", "region_split", "solve_voltages",
]
