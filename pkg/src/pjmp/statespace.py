"""Reachable-state enumeration inside a coordinate box and the rate matrix.

The box {x : x_i <= m_box for all i} plays the role of the compact set the
drift condition pushes the process back into. Jumps that would leave the box
are saturated coordinate-wise, which keeps probability flow conservative: a
saturated jump that lands back on its own source is a no-op and contributes
nothing to the generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .model import PotentialState, SynapticNetwork, intensity_at, jump_map

__all__ = [
    "EnumeratedSpace",
    "SparseGenerator",
    "StateSpaceCapExceeded",
    "saturate",
    "enumerate_states",
    "assemble_generator",
    "export_matrix_market",
    "export_state_table",
]

DEFAULT_MAX_STATES = 200_000


class StateSpaceCapExceeded(RuntimeError):
    """Enumeration aborted because the box holds more states than allowed."""


_CAP_MEMO: dict = {}


def _cap_numerator(m_box, den: int) -> int:
    """Largest integer numerator with value <= m_box, exactly."""
    key = (m_box, den)
    cap = _CAP_MEMO.get(key)
    if cap is None:
        exact = Fraction(m_box) * den
        cap = int(exact) if exact.denominator == 1 else int(exact.numerator // exact.denominator)
        _CAP_MEMO[key] = cap
    return cap


def saturate(x: PotentialState, m_box) -> PotentialState:
    """Cap every coordinate at the largest lattice value <= m_box. Idempotent."""
    if m_box <= 0:
        raise ValueError(f"box bound must be positive, got {m_box}")
    cap = _cap_numerator(m_box, x.denominator)
    if all(n <= cap for n in x.numerators):
        return x
    return PotentialState(tuple(min(n, cap) for n in x.numerators), x.denominator)


@dataclass(frozen=True)
class EnumeratedSpace:
    """All states reachable from the origin under saturated jumps.

    Ordering is breadth-first layer by layer, each layer sorted
    lexicographically by numerators, so the enumeration (and everything
    derived from it) is identical across runs and platforms.
    """

    net: SynapticNetwork
    states: tuple[PotentialState, ...]
    m_box: float
    origin: PotentialState
    index: dict = field(repr=False)

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, x: PotentialState) -> bool:
        return x in self.index

    def position(self, x: PotentialState) -> int:
        return self.index[x]

    def interior_mask(self) -> np.ndarray:
        """True where no jump from the state needs saturation."""
        out = np.zeros(len(self.states), dtype=bool)
        for k, x in enumerate(self.states):
            targets = [jump_map(self.net, x, i) for i in range(self.net.n_neurons)]
            out[k] = all(saturate(y, self.m_box) == y for y in targets)
        return out

    def coordinate_values(self) -> np.ndarray:
        """(N, n_states) array of float coordinates."""
        den = self.net.denominator
        return np.array(
            [[x.numerators[i] / den for x in self.states] for i in range(self.net.n_neurons)]
        )

    def totals(self) -> np.ndarray:
        """sum_i x^i per state."""
        den = self.net.denominator
        return np.array([sum(x.numerators) / den for x in self.states])

    def total_rates(self) -> np.ndarray:
        """Total firing rate per state."""
        d = float(self.net.intensity.delta)
        s = float(self.net.intensity.slope)
        return self.net.n_neurons * d + s * self.totals()


def enumerate_states(
    net: SynapticNetwork,
    x0: PotentialState,
    m_box,
    max_states: int = DEFAULT_MAX_STATES,
) -> EnumeratedSpace:
    """Breadth-first closure of {saturate(x0)} under saturated jumps."""
    if m_box <= 0:
        raise ValueError(f"box bound must be positive, got {m_box}")
    origin = saturate(x0, m_box)
    seen = {origin}
    order = [origin]
    frontier = [origin]
    while frontier:
        discovered = set()
        for x in sorted(frontier, key=lambda s: s.numerators):
            for i in range(net.n_neurons):
                y = saturate(jump_map(net, x, i), m_box)
                if y not in seen:
                    seen.add(y)
                    discovered.add(y)
        frontier = sorted(discovered, key=lambda s: s.numerators)
        order.extend(frontier)
        if len(order) > max_states:
            raise StateSpaceCapExceeded(
                f"box m_box={m_box} holds more than {max_states} reachable states; "
                f"raise max_states or shrink the box"
            )
    return EnumeratedSpace(
        net=net,
        states=tuple(order),
        m_box=float(m_box),
        origin=origin,
        index={s: k for k, s in enumerate(order)},
    )


@dataclass(frozen=True)
class SparseGenerator:
    """Rate matrix of the saturated chain on an enumerated space.

    ``matrix`` is CSR with nonnegative off-diagonal rates and each diagonal
    equal to minus its row's off-diagonal sum, so rows sum to zero. ``space``
    is None when the generator was built directly from a raw matrix (used for
    sanity chains in tests).
    """

    matrix: sp.csr_matrix
    space: EnumeratedSpace | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @staticmethod
    def from_matrix(q) -> "SparseGenerator":
        return SparseGenerator(matrix=sp.csr_matrix(q), space=None)

    def row_sum_defect(self) -> float:
        return float(np.abs(self.matrix.sum(axis=1)).max())


def assemble_generator(net: SynapticNetwork, space: EnumeratedSpace) -> SparseGenerator:
    """Build the saturated-chain rate matrix over a space enumerated for net.

    Each state contributes one off-diagonal entry per neuron (rates merging
    onto the same target are summed); saturated self-jumps are dropped.
    """
    if space.net != net:
        raise ValueError("space was enumerated for a different network")
    rows, cols, vals = [], [], []
    diag = np.zeros(len(space))
    for k, x in enumerate(space.states):
        for i in range(net.n_neurons):
            y = saturate(jump_map(net, x, i), space.m_box)
            if y == x:
                continue
            rows.append(k)
            cols.append(space.position(y))
            vals.append(intensity_at(net, x, i))
            diag[k] -= vals[-1]
    n = len(space)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    q = (off + sp.diags(diag)).tocsr()
    q.sum_duplicates()
    return SparseGenerator(matrix=q, space=space)


def export_matrix_market(gen: SparseGenerator, path, comment: str = "") -> None:
    """Write the rate matrix in MatrixMarket coordinate format."""
    mmwrite(str(path), gen.matrix.tocoo(), comment=comment)


def export_state_table(space: EnumeratedSpace, path, header_comment: str = "") -> None:
    """CSV listing of the enumeration: index, numerators, shared denominator."""
    n = space.net.n_neurons
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        cols = ",".join(f"n{i}" for i in range(n))
        fh.write(f"index,{cols},denominator\n")
        for k, s in enumerate(space.states):
            nums = ",".join(str(v) for v in s.numerators)
            fh.write(f"{k},{nums},{s.denominator}\n")
