"""
Models module - Curves, model parameters, parameter processes and simulation state
"""
from app.models.curves import ForwardCurve, GridFunction, HullWhiteExtension, TimeGrid, YieldCurve
from app.models.panel import YieldPanel
from app.models.params import CirParams, ModelKind, RiccatiPair, VasicekParams, make_params
from app.models.processes import ParamProcessKind, ParamProcessSpec
from app.models.state import CrcState, SimConfig, required_nodes

__all__ = [
    "CirParams",
    "CrcState",
    "ForwardCurve",
    "GridFunction",
    "HullWhiteExtension",
    "ModelKind",
    "ParamProcessKind",
    "ParamProcessSpec",
    "RiccatiPair",
    "SimConfig",
    "TimeGrid",
    "VasicekParams",
    "YieldCurve",
    "YieldPanel",
    "make_params",
    "required_nodes",
]
