"""Density-matrix trajectories under random rank-N/2 projective measurements.

Two modes: ``measurement`` samples a branch by the Born rule each step,
``postselection`` always keeps the plus branch.  Observables are the purity
tr(rho^2) and the von Neumann entropy.

Dense operations (``measure_step``, ``postselect_step``) act on explicit
N x N density matrices.  ``run_trajectory`` uses an algebraically
equivalent factored representation: the state is kept as rho ~ W A A^H W^H
with W an (implicit) orthonormal support frame and A an m x m factor.
Conjugating the random projector into the state's own frame, one
measurement step maps A -> (top or bottom r rows of T) @ A where
T = U^H W is an N x m Haar isometry for any fixed orthonormal W.  This
never materializes an N x N matrix and is exact in law; ``tests`` replay
both representations against the same unitaries to confirm the algebra.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg.blas import zherk

from .randmat import haar_isometry, hermitize, standard_normal_complex
from .rng import RngStream

__all__ = [
    "BRANCH_EPS",
    "DEGENERATE_P_EPS",
    "MeasurementOutcome",
    "TrajectoryRecord",
    "ZeroProbabilityBranch",
    "maximally_mixed",
    "purity",
    "vn_entropy",
    "postselect_step",
    "measure_step",
    "run_trajectory",
    "rank2_theory_purity",
    "avg_entropy_after_measurement",
    "FactorState",
    "factor_step",
]

# Branch probabilities below this are numerically meaningless in double
# precision; postselection onto such a branch is an error, measurement
# forces the dominant branch.
BRANCH_EPS = 1e-12
DEGENERATE_P_EPS = 1e-12
ENTROPY_EIG_CUTOFF = 1e-14


class ZeroProbabilityBranch(RuntimeError):
    """Raised when postselecting onto a branch with tr(P rho) ~ 0."""


@dataclass(frozen=True)
class MeasurementOutcome:
    branch: str  # "plus" | "minus"
    probability: float  # Born probability of the *sampled* branch's plus-ness


def maximally_mixed(n: int) -> np.ndarray:
    """rho = I/N."""
    if n < 2:
        raise ValueError(f"need dimension >= 2, got {n}")
    return np.eye(n, dtype=complex) / n


def purity(rho: np.ndarray) -> float:
    """tr(rho^2), clamped to [1/N, 1] when round-off exits by < 1e-9."""
    n = rho.shape[0]
    val = float(np.real(np.vdot(rho, rho)))  # tr(rho^H rho) = tr(rho^2) for Hermitian rho
    return _clamp(val, 1.0 / n, 1.0)


def _clamp(val: float, lo: float, hi: float, slack: float = 1e-9) -> float:
    if lo - slack <= val < lo:
        return lo
    if hi < val <= hi + slack:
        return hi
    return val


def vn_entropy(rho: np.ndarray) -> float:
    """Von Neumann entropy in nats; eigenvalues below 1e-14 are dropped."""
    w = np.linalg.eigvalsh(rho)
    w = w[w > ENTROPY_EIG_CUTOFF]
    return float(-np.sum(w * np.log(w)))


def postselect_step(rho: np.ndarray, proj: np.ndarray) -> np.ndarray:
    """rho' = P rho P / tr(P rho), re-symmetrized, trace renormalized.

    Raises ZeroProbabilityBranch when tr(P rho) <= 1e-12.
    """
    p = float(np.real(np.einsum("ij,ji->", proj, rho)))
    if p <= BRANCH_EPS:
        raise ZeroProbabilityBranch(f"tr(P rho) = {p:.3e} <= {BRANCH_EPS}")
    out = hermitize(proj @ rho @ proj)
    return out / np.real(np.trace(out))


def measure_step(
    rho: np.ndarray, proj: np.ndarray, rng: RngStream | np.random.Generator
) -> tuple[np.ndarray, MeasurementOutcome]:
    """Born-rule measurement of {P, I-P}.

    With probability p = tr(P rho) returns (P rho P / p, plus), otherwise
    the complementary branch.  p outside [1e-12, 1 - 1e-12] forces the
    dominant branch to keep trajectories continuous near purity 1.
    """
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    p = float(np.real(np.einsum("ij,ji->", proj, rho)))
    if p < DEGENERATE_P_EPS:
        take_plus = False
    elif p > 1.0 - DEGENERATE_P_EPS:
        take_plus = True
    else:
        take_plus = gen.uniform() < p
    if take_plus:
        out = hermitize(proj @ rho @ proj)
        branch = "plus"
    else:
        comp = np.eye(rho.shape[0], dtype=complex) - proj
        out = hermitize(comp @ rho @ comp)
        branch = "minus"
    out = out / np.real(np.trace(out))
    return out, MeasurementOutcome(branch=branch, probability=p)


def rank2_theory_purity(t: float, n: int, mode: str) -> float:
    """Closed-form mean purity for a rank-2 start at purity 1/2.

    measurement:   1 - 1/(3 exp(t/N) - 1)
    postselection: 1 - 1/(3 t/N + 2)

    Valid for t << N.
    """
    if t < 0 or n < 2:
        raise ValueError(f"need t >= 0 and N >= 2, got t={t}, N={n}")
    if mode == "measurement":
        x = t / n
        if x > 700.0:  # exp overflow guard; the value is 1 to double precision
            return 1.0
        return 1.0 - 1.0 / (3.0 * np.exp(x) - 1.0)
    if mode == "postselection":
        return 1.0 - 1.0 / (3.0 * t / n + 2.0)
    raise ValueError(f"unknown mode {mode!r}")


def avg_entropy_after_measurement(
    rho: np.ndarray, projectors: list[np.ndarray], tol: float = 1e-10
) -> tuple[float, float]:
    """Outcome-averaged (entropy, sqrt-purity) for a complete projective measurement.

    Branches with probability <= 1e-12 are dropped from the averages.
    Raises ValueError if the projectors do not form a complete orthogonal
    set to within ``tol``.
    """
    n = rho.shape[0]
    total = sum(projectors)
    if not np.allclose(total, np.eye(n), atol=tol):
        raise ValueError("invalid measurement: projectors do not sum to identity")
    for i, pi in enumerate(projectors):
        for j, pj in enumerate(projectors):
            expect = pi if i == j else np.zeros_like(pi)
            if not np.allclose(pi @ pj, expect, atol=tol):
                raise ValueError("invalid measurement: projectors not orthogonal")
    avg_entropy = 0.0
    avg_sqrt_purity = 0.0
    for proj in projectors:
        p = float(np.real(np.einsum("ij,ji->", proj, rho)))
        if p <= BRANCH_EPS:
            continue
        sigma = hermitize(proj @ rho @ proj) / p
        avg_entropy += p * vn_entropy(sigma)
        avg_sqrt_purity += p * np.sqrt(max(float(np.real(np.vdot(sigma, sigma))), 0.0))
    return avg_entropy, avg_sqrt_purity


# ---------------------------------------------------------------------------
# Factored trajectory engine
# ---------------------------------------------------------------------------


@dataclass
class FactorState:
    """State rho ~ W A A^H W^H with implicit orthonormal frame W (N x m).

    ``factor`` is the m x m matrix A, kept at unit Frobenius norm.
    """

    dim: int  # N
    factor: np.ndarray  # (m, m) complex

    @property
    def rank(self) -> int:
        return self.factor.shape[0]

    @classmethod
    def maximally_mixed(cls, n: int) -> "FactorState":
        return cls(dim=n, factor=np.eye(n, dtype=complex) / np.sqrt(n))

    @classmethod
    def from_spectrum(cls, n: int, spectrum: np.ndarray) -> "FactorState":
        """Rank-d state with the given eigenvalues on a d-dim support."""
        lam = np.asarray(spectrum, dtype=float)
        if lam.ndim != 1 or np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
            raise ValueError("spectrum must be nonnegative and sum to 1")
        return cls(dim=n, factor=np.diag(np.sqrt(lam)).astype(complex))

    def gram(self) -> np.ndarray:
        a = self.factor
        return a.conj().T @ a

    def _gram_lower(self) -> np.ndarray:
        # conj(A^H A), lower triangle, via a rank-k Hermitian update on the
        # transposed view (no C->F copy).  Conjugation changes neither the
        # diagonal, norms, nor eigenvalues used downstream; entries strictly
        # above the diagonal come back exactly zero.
        return zherk(1.0, self.factor.T, trans=0, lower=1)

    def purity(self) -> float:
        return self._purity_from_gram(self._gram_lower())

    def _purity_from_gram(self, h: np.ndarray) -> float:
        d = np.real(np.diagonal(h))
        tr = float(d.sum())
        # ||H||_F^2 over the full Hermitian matrix from its zero-upper storage
        val = (2.0 * float(np.real(np.vdot(h, h))) - float(np.dot(d, d))) / tr**2
        return _clamp(val, 1.0 / self.dim, 1.0)

    def _entropy_from_gram(self, h: np.ndarray) -> float:
        w = np.linalg.eigvalsh(h, UPLO="L")
        w = w / w.sum()
        w = w[w > ENTROPY_EIG_CUTOFF]
        return float(-np.sum(w * np.log(w)))

    def vn_entropy(self) -> float:
        return self._entropy_from_gram(self._gram_lower())

    def observables(self, with_entropy: bool = True) -> tuple[float, float]:
        """(purity, entropy) computed off a single Gram evaluation."""
        h = self._gram_lower()
        pur = self._purity_from_gram(h)
        ent = self._entropy_from_gram(h) if with_entropy else float("nan")
        return pur, ent


def factor_step(
    state: FactorState,
    gen: np.random.Generator,
    mode: str,
    proj_rank: int | None = None,
) -> tuple[FactorState, MeasurementOutcome]:
    """One random rank-r measurement step in the factored representation.

    Samples the Haar isometry T = U^H W (N x m), whose top r rows act on
    the plus branch and bottom N - r rows on the minus branch.
    """
    n = state.dim
    r = n // 2 if proj_rank is None else proj_rank
    m = state.rank
    a = state.factor
    if 2 * m > n:
        # square-ish Ginibre can be ill-conditioned; use Householder QR once
        t_iso = haar_isometry(n, m, gen)
        top, bottom = t_iso[:r], t_iso[r:]
        x = a
    else:
        # Cholesky-orthonormalized Ginibre: T = G L^{-H} is exactly Haar and
        # only the two half-blocks acting on the factor are ever formed.
        # Working with conj(S) = conj(G^H G) keeps BLAS on transposed views:
        # its Cholesky factor is conj(L), and L^{-H} A is a plain
        # transpose-solve against it.
        g = standard_normal_complex(gen, (n, m))
        s_conj = zherk(1.0, g.T, trans=0, lower=1)
        lo_conj = scipy.linalg.cholesky(
            s_conj, lower=True, overwrite_a=True, check_finite=False
        )
        x = scipy.linalg.solve_triangular(
            lo_conj, a, lower=True, trans="T", check_finite=False
        )
        top, bottom = g[:r], g[r:]
    y_plus = top @ x
    p_plus = float(np.real(np.vdot(y_plus, y_plus)))  # ||A|| = 1
    p_plus = min(max(p_plus, 0.0), 1.0)

    if mode == "postselection":
        if p_plus <= BRANCH_EPS:
            raise ZeroProbabilityBranch(f"tr(P rho) = {p_plus:.3e} <= {BRANCH_EPS}")
        take_plus = True
    elif mode == "measurement":
        if p_plus < DEGENERATE_P_EPS:
            take_plus = False
        elif p_plus > 1.0 - DEGENERATE_P_EPS:
            take_plus = True
        else:
            take_plus = gen.uniform() < p_plus
    else:
        raise ValueError(f"unknown mode {mode!r}")

    y = y_plus if take_plus else bottom @ x
    rows, cols = y.shape
    if cols > rows:
        # wide factor (full-rank start): compress the internal index by a
        # right rotation, which leaves rho = (frame) Y Y^H (frame)^H fixed
        _, rr = np.linalg.qr(y.conj().T, mode="reduced")
        y = rr.conj().T
    elif rows > cols:
        # tall factor (low-rank state): absorb the column frame Q into the
        # implicit support isometry and keep the square R factor
        _, rr = np.linalg.qr(y, mode="reduced")
        y = rr
    y = y / np.linalg.norm(y)
    out = MeasurementOutcome(branch="plus" if take_plus else "minus", probability=p_plus)
    return FactorState(dim=n, factor=y), out


# ---------------------------------------------------------------------------
# Trajectory records
# ---------------------------------------------------------------------------

CSV_HEADER = "step,purity,entropy_nats,branch,prob"


@dataclass
class TrajectoryRecord:
    """Per-step observables of one trajectory plus the seed that replays it."""

    mode: str
    dim: int
    steps: int
    seed: int
    step_index: list[int] = field(default_factory=list)
    purity: list[float] = field(default_factory=list)
    entropy_nats: list[float] = field(default_factory=list)
    branch: list[str] = field(default_factory=list)
    prob: list[float] = field(default_factory=list)
    aborted: bool = False  # postselection hit a zero-probability branch

    def append(self, step: int, pur: float, ent: float, br: str, pr: float) -> None:
        self.step_index.append(step)
        self.purity.append(pur)
        self.entropy_nats.append(ent)
        self.branch.append(br)
        self.prob.append(pr)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for i in range(len(self.step_index)):
            lines.append(
                f"{self.step_index[i]},{self.purity[i]:.17g},"
                f"{self.entropy_nats[i]:.17g},{self.branch[i]},{self.prob[i]:.17g}"
            )
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        steps_to_99 = None
        for i, p in enumerate(self.purity):
            if p > 0.99:
                steps_to_99 = self.step_index[i]
                break
        return {
            "mode": self.mode,
            "N": self.dim,
            "steps": self.steps,
            "seed": self.seed,
            "final_purity": self.purity[-1] if self.purity else None,
            "steps_to_purity_0.99": steps_to_99,
            "aborted": self.aborted,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def run_trajectory(
    n: int,
    steps: int,
    mode: str,
    seed: int,
    stream_index: int = 0,
    initial_spectrum: np.ndarray | None = None,
    record_entropy: bool = True,
    stop_purity: float | None = None,
) -> TrajectoryRecord:
    """Run one trajectory of random rank-N/2 measurements from I/N.

    ``initial_spectrum`` replaces the maximally mixed start with a low-rank
    state of the given eigenvalues.  ``record_entropy=False`` writes NaN in
    the entropy column (the eigendecomposition dominates the cost at large
    N).  ``stop_purity`` ends the run early once purity stays above the
    threshold; the record is truncated, not flagged.
    """
    if n % 2 != 0 or n < 2:
        raise ValueError(f"need even N >= 2, got {n}")
    if steps < 0:
        raise ValueError(f"need steps >= 0, got {steps}")
    if mode not in ("measurement", "postselection"):
        raise ValueError(f"unknown mode {mode!r}")
    gen = RngStream(seed, stream_index).generator()
    if initial_spectrum is None:
        state = FactorState.maximally_mixed(n)
    else:
        state = FactorState.from_spectrum(n, initial_spectrum)
    rec = TrajectoryRecord(mode=mode, dim=n, steps=steps, seed=seed)
    pur, ent = state.observables(record_entropy)
    rec.append(0, pur, ent, "init", 1.0)
    for t in range(1, steps + 1):
        try:
            state, out = factor_step(state, gen, mode)
        except ZeroProbabilityBranch:
            rec.aborted = True
            break
        pur, ent = state.observables(record_entropy)
        rec.append(t, pur, ent, out.branch, out.probability)
        if stop_purity is not None and pur >= stop_purity:
            break
    return rec
