"""Containers tying the discretizations together."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flow import FlowOperators, FlowState
from .potentials import MaterialFunctions, PotentialSpec
from .qspace import ConfigSpace, QGrid
from .transport import XGrid


@dataclass
class Model:
    xgrid: XGrid
    cspace: ConfigSpace
    mat: MaterialFunctions
    f_cells: np.ndarray
    coupling: bool = True
    flow_ops: FlowOperators = field(default=None)

    def __post_init__(self):
        if self.flow_ops is None:
            self.flow_ops = FlowOperators(self.xgrid)

    @property
    def spec(self) -> PotentialSpec:
        return self.cspace.spec

    @property
    def qgrid(self) -> QGrid:
        return self.cspace.grid

    @property
    def has_forcing(self) -> bool:
        return bool(np.any(self.f_cells))

    def q_weights(self):
        """q-cell measures broadcast to (n_r, n_a)."""
        return np.broadcast_to(self.qgrid.area[:, None], (self.qgrid.n_r, self.qgrid.n_a))


@dataclass
class State:
    flow: FlowState
    theta: np.ndarray
    phi: np.ndarray
    t: float = 0.0
    step: int = 0

    def copy(self):
        return State(self.flow.copy(), self.theta.copy(), self.phi.copy(), self.t, self.step)
