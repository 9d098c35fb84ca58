"""Stabilizer toy model: random Pauli measurements on n qubits.

Pauli strings are 2n-bit integers (low n bits = X part, high n bits =
Z part); phases are dropped since entropy and the measurement-case
statistics depend only on the symplectic structure.  A state is a tableau
of k independent, pairwise-commuting rows; its entropy is n - k bits.

Measuring a uniformly random Pauli (identity included) on a k-row tableau
adds a row with probability 2^-k (commutes with every row) times
1 - 4^-(n-k) (not already in the row span); anticommuting measurements
trade one row and leave k unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

__all__ = [
    "PauliString",
    "StabilizerTableau",
    "symplectic_product",
    "measure_pauli",
    "entropy_bits",
    "StabilizerTrajectory",
    "run_purification",
    "theory_added_probability",
]

CASES = ("added", "replaced", "redundant", "identity")


@dataclass(frozen=True)
class PauliString:
    """Phase-free Pauli operator on n qubits in binary symplectic form."""

    n: int
    bits: int  # X part in bits [0, n), Z part in bits [n, 2n)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Build from a string like 'XIZY' (qubit 0 first)."""
        n = len(label)
        x = z = 0
        for i, ch in enumerate(label.upper()):
            if ch == "X":
                x |= 1 << i
            elif ch == "Z":
                z |= 1 << i
            elif ch == "Y":
                x |= 1 << i
                z |= 1 << i
            elif ch != "I":
                raise ValueError(f"bad Pauli letter {ch!r}")
        return cls(n=n, bits=x | (z << n))

    @property
    def x_part(self) -> int:
        return self.bits & ((1 << self.n) - 1)

    @property
    def z_part(self) -> int:
        return self.bits >> self.n

    def is_identity(self) -> bool:
        return self.bits == 0

    def label(self) -> str:
        out = []
        for i in range(self.n):
            x = (self.x_part >> i) & 1
            z = (self.z_part >> i) & 1
            out.append("IXZY"[x + 2 * z] if x + 2 * z != 3 else "Y")
        return "".join(out)


def symplectic_product(p: PauliString, q: PauliString) -> int:
    """0 if p and q commute, 1 if they anticommute."""
    if p.n != q.n:
        raise ValueError(f"length mismatch: {p.n} vs {q.n}")
    return _symp(p.bits, q.bits, p.n)


def _symp(a: int, b: int, n: int) -> int:
    mask = (1 << n) - 1
    return (
        ((a & (b >> n)).bit_count() + ((a >> n) & b & mask).bit_count()
         ) & 1
    )


@dataclass
class StabilizerTableau:
    """k independent, pairwise commuting rows over n qubits."""

    n: int
    rows: list[int] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.rows)

    def pauli_rows(self) -> list[PauliString]:
        return [PauliString(self.n, r) for r in self.rows]

    def row_echelon(self) -> list[int]:
        """Echelonized copy of the row span (for membership tests)."""
        basis: list[int] = []
        for row in self.rows:
            basis = _insert_echelon(basis, row)
        return basis

    def contains(self, bits: int) -> bool:
        return _reduce(self.row_echelon(), bits) == 0

    def is_valid(self) -> bool:
        """Independence over GF(2) and pairwise commutation."""
        if len(self.row_echelon()) != self.k:
            return False
        for i in range(self.k):
            for j in range(i + 1, self.k):
                if _symp(self.rows[i], self.rows[j], self.n):
                    return False
        return True


def _insert_echelon(basis: list[int], vec: int) -> list[int]:
    vec = _reduce(basis, vec)
    if vec:
        basis = basis + [vec]
        basis.sort(key=int.bit_length, reverse=True)
    return basis


def _reduce(basis: list[int], vec: int) -> int:
    for b in basis:
        top = 1 << (b.bit_length() - 1)
        if vec & top:
            vec ^= b
    return vec


def entropy_bits(tab: StabilizerTableau) -> int:
    """n - k bits; the maximally mixed state has no rows."""
    return tab.n - tab.k


def measure_pauli(
    tab: StabilizerTableau, p: PauliString
) -> tuple[StabilizerTableau, str]:
    """Measure a Pauli; returns the updated tableau and the case label.

    identity: p = I, nothing measured.  replaced: p anticommutes with some
    rows; the first such row is the pivot, it multiplies every other
    anticommuting row, and p takes its place (k unchanged).  redundant:
    p commutes with all rows and lies in their span.  added: p commutes
    with all rows and is independent (k grows by one).
    """
    if p.n != tab.n:
        raise ValueError(f"length mismatch: {p.n} vs {tab.n}")
    if p.is_identity():
        return tab, "identity"
    n = tab.n
    bits = p.bits
    anti = [i for i, row in enumerate(tab.rows) if _symp(row, bits, n)]
    if anti:
        pivot = anti[0]
        new_rows = list(tab.rows)
        for i in anti[1:]:
            new_rows[i] ^= new_rows[pivot]
        new_rows[pivot] = bits
        return StabilizerTableau(n=n, rows=new_rows), "replaced"
    if tab.contains(bits):
        return tab, "redundant"
    return StabilizerTableau(n=n, rows=list(tab.rows) + [bits]), "added"


def theory_added_probability(n: int, k: int) -> float:
    """P(added | k rows) under uniform-over-all-Paulis sampling:
    2^-k (1 - 4^-(n-k))."""
    return 2.0**-k * (1.0 - 4.0 ** -(n - k))


@dataclass
class StabilizerTrajectory:
    """Entropy trajectory plus per-k case statistics of one run."""

    n: int
    sampling: str
    seed: int
    entropy: list[int] = field(default_factory=list)
    cases: list[str] = field(default_factory=list)
    visits_by_k: np.ndarray = field(default_factory=lambda: np.empty(0))
    added_by_k: np.ndarray = field(default_factory=lambda: np.empty(0))
    steps_to_pure: int | None = None

    def to_csv(self) -> str:
        lines = ["step,entropy_bits,case"]
        for t, case in enumerate(self.cases):
            lines.append(f"{t + 1},{self.entropy[t + 1]},{case}")
        return "\n".join(lines) + "\n"


def run_purification(
    n: int,
    steps: int,
    sampling: str = "uniform_all_paulis",
    seed: int = 0,
    stream_index: int = 0,
    stop_when_pure: bool = True,
) -> StabilizerTrajectory:
    """Iterate uniform random Pauli measurements from the maximally mixed
    state, recording the entropy trajectory and per-k added-case counts.

    ``uniform_all_paulis`` draws from all 4^n strings (identity included);
    ``uniform_nonidentity`` excludes the identity (the conjugated-fixed-
    Pauli ensemble).
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if sampling not in ("uniform_all_paulis", "uniform_nonidentity"):
        raise ValueError(f"unknown sampling {sampling!r}")
    gen = RngStream(seed, stream_index).generator()
    tab = StabilizerTableau(n=n)
    traj = StabilizerTrajectory(
        n=n,
        sampling=sampling,
        seed=seed,
        visits_by_k=np.zeros(n + 1, dtype=np.int64),
        added_by_k=np.zeros(n + 1, dtype=np.int64),
    )
    traj.entropy.append(entropy_bits(tab))
    total = 1 << (2 * n)
    buf: np.ndarray | None = None
    buf_pos = 0
    for t in range(steps):
        if buf is None or buf_pos >= buf.size:
            buf = gen.integers(0, total, size=4096, dtype=np.int64)
            buf_pos = 0
        bits = int(buf[buf_pos])
        buf_pos += 1
        if sampling == "uniform_nonidentity":
            while bits == 0:
                if buf_pos >= buf.size:
                    buf = gen.integers(0, total, size=4096, dtype=np.int64)
                    buf_pos = 0
                bits = int(buf[buf_pos])
                buf_pos += 1
        k_before = tab.k
        traj.visits_by_k[k_before] += 1
        tab, case = measure_pauli(tab, PauliString(n, bits))
        if case == "added":
            traj.added_by_k[k_before] += 1
        traj.cases.append(case)
        traj.entropy.append(entropy_bits(tab))
        if tab.k == n:
            traj.steps_to_pure = t + 1
            if stop_when_pure:
                break
    return traj
