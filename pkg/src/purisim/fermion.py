"""Gaussian fermionic states under random quadratic unitaries and
single-mode number measurements.

Two interchangeable encodings of a Gaussian state on n modes:

  ModeState      n x n Hermitian matrix Mc with Mc_uv = 2 Tr(rho a_u a_v+) - d_uv;
                 closed under particle-number-conserving dynamics (no pairing).
  MajoranaState  2n x 2n real antisymmetric M with M_ij = (i/2) Tr rho [g_i, g_j];
                 fully general (pairing allowed).

The proxy entropy (log 2)(n + Tr M^2 / 2) = (log 2)(n - Tr Mc^2) is the
workhorse observable: it is the second Renyi entropy at the maximally mixed
state (M = 0) and at Gaussian pure states (M^2 = -1), and a one-step
measurement decreases it on outcome average, with closed forms for the
decrease in both encodings.  ``fock.py`` provides a dense 2^n oracle that
every update here is validated against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .randmat import (
    haar_special_orthogonal_batch,
    haar_unitary_batch,
)
from .rng import RngStream

__all__ = [
    "LOG2",
    "ModeState",
    "MajoranaState",
    "FermionOutcome",
    "s_proxy",
    "renyi2",
    "williamson",
    "apply_rotation",
    "apply_mode_unitary",
    "embed_mode_unitary",
    "embed_mode_state",
    "measure_mode_conserving",
    "delta_s_proxy_conserving",
    "measure_mode_general",
    "delta_s_proxy_general",
    "PurificationEnsemble",
    "run_purification",
    "mc_delta_s_pairing",
]

LOG2 = float(np.log(2.0))
BRANCH_EPS = 1e-12
PURE_MODE_EPS = 1e-12


@dataclass
class ModeState:
    """Number-conserving Gaussian state: n x n Hermitian correlation matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("mode correlation matrix must be square")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def maximally_mixed(cls, n: int) -> "ModeState":
        return cls(np.zeros((n, n), dtype=complex))

    @classmethod
    def from_occupations(cls, eta: np.ndarray) -> "ModeState":
        return cls(np.diag(np.asarray(eta, dtype=complex)))

    def validate(self, tol: float = 1e-9) -> "ModeState":
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("mode correlation matrix not Hermitian")
        w = np.linalg.eigvalsh(m)
        if w.min() < -1 - tol or w.max() > 1 + tol:
            raise ValueError(f"mode eigenvalues outside [-1, 1]: [{w.min()}, {w.max()}]")
        return self


@dataclass
class MajoranaState:
    """General Gaussian state: 2n x 2n real antisymmetric correlation matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        s = self.matrix.shape
        if self.matrix.ndim != 2 or s[0] != s[1] or s[0] % 2 != 0:
            raise ValueError("Majorana correlation matrix must be square even-dim")

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2

    @classmethod
    def maximally_mixed(cls, n: int) -> "MajoranaState":
        return cls(np.zeros((2 * n, 2 * n)))

    @classmethod
    def from_williamson(cls, lam: np.ndarray) -> "MajoranaState":
        lam = np.asarray(lam, dtype=float)
        m = np.zeros((2 * lam.size, 2 * lam.size))
        for mu, val in enumerate(lam):
            m[2 * mu, 2 * mu + 1] = val
            m[2 * mu + 1, 2 * mu] = -val
        return cls(m)

    def validate(self, tol: float = 1e-9) -> "MajoranaState":
        m = self.matrix
        if np.max(np.abs(m + m.T)) > 1e-12:
            raise ValueError("Majorana correlation matrix not antisymmetric")
        lam = williamson(self)
        if lam.max() > 1 + tol:
            raise ValueError(f"Williamson value above 1: {lam.max()}")
        return self


@dataclass(frozen=True)
class FermionOutcome:
    branch: str  # "empty" (+) | "filled" (-)
    probability: float  # Born probability of the sampled branch


GaussianState = ModeState | MajoranaState


def _antisymmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m - m.swapaxes(-1, -2))


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().swapaxes(-1, -2))


def s_proxy(state: GaussianState) -> float:
    """Proxy entropy in nats, clamped to [0, n log 2] against round-off."""
    if isinstance(state, ModeState):
        n = state.n
        val = LOG2 * (n - float(np.real(np.vdot(state.matrix, state.matrix))))
    else:
        n = state.n
        # Tr M^2 = -||M||_F^2 for antisymmetric M
        val = LOG2 * (n - 0.5 * float(np.vdot(state.matrix, state.matrix).real))
    top = n * LOG2
    if -1e-9 < val < 0.0:
        return 0.0
    if top < val < top + 1e-9:
        return top
    return val


def williamson(state: MajoranaState) -> np.ndarray:
    """Williamson values of M, descending: the +imag parts of its spectrum.

    i M is Hermitian for real antisymmetric M, so these are the top-n
    eigenvalues of i M.
    """
    m = state.matrix
    if np.max(np.abs(m + m.T)) > 1e-9:
        raise ValueError("matrix is not antisymmetric to tolerance")
    w = np.linalg.eigvalsh(1j * _antisymmetrize(m))
    return w[::-1][: state.n].copy()


def renyi2(state: GaussianState) -> float:
    """Second Renyi entropy n log 2 - (1/2) Tr log(1 - M^2), in nats."""
    if isinstance(state, MajoranaState):
        lam = williamson(state)
    else:
        lam = np.abs(np.linalg.eigvalsh(state.matrix))
    lam = np.clip(lam, 0.0, 1.0)
    return float(state.n * LOG2 - np.sum(np.log1p(lam**2)))


def apply_rotation(state: MajoranaState, o: np.ndarray) -> MajoranaState:
    """Majorana-basis rotation M -> O M O^T, re-antisymmetrized."""
    if o.shape != state.matrix.shape:
        raise ValueError(f"dimension mismatch: {o.shape} vs {state.matrix.shape}")
    return MajoranaState(_antisymmetrize(o @ state.matrix @ o.T))


def apply_mode_unitary(state: ModeState, u: np.ndarray) -> ModeState:
    """Mode-basis rotation Mc -> U Mc U^H, re-Hermitized."""
    if u.shape != state.matrix.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {state.matrix.shape}")
    return ModeState(_hermitize(u @ state.matrix @ u.conj().T))


def embed_mode_unitary(u: np.ndarray) -> np.ndarray:
    """Real 2n x 2n rotation acting on Majoranas like the mode unitary u.

    2 x 2 block at (mode mu, mode nu): [[Re u, -Im u], [Im u, Re u]].
    Output is special orthogonal (det = |det u|^2 = 1).
    """
    u = np.asarray(u, dtype=complex)
    n = u.shape[0]
    if np.max(np.abs(u @ u.conj().T - np.eye(n))) > 1e-10:
        raise ValueError("input is not unitary to 1e-10")
    o = np.zeros((2 * n, 2 * n))
    o[0::2, 0::2] = u.real
    o[0::2, 1::2] = -u.imag
    o[1::2, 0::2] = u.imag
    o[1::2, 1::2] = u.real
    return o


def embed_mode_state(state: ModeState) -> MajoranaState:
    """Majorana correlation matrix of a zero-pairing state.

    M is the real representation of -i Mc: block at (mu, nu) is
    [[Im Mc, Re Mc], [-Re Mc, Im Mc]].
    """
    mc = state.matrix
    n = state.n
    m = np.zeros((2 * n, 2 * n))
    m[0::2, 0::2] = mc.imag
    m[0::2, 1::2] = mc.real
    m[1::2, 0::2] = -mc.real
    m[1::2, 1::2] = mc.imag
    return MajoranaState(_antisymmetrize(m))


# ---------------------------------------------------------------------------
# Single-mode number measurements
# ---------------------------------------------------------------------------


def _pick_branch(
    p_plus: float, rng: RngStream | np.random.Generator | None
) -> bool:
    if p_plus < BRANCH_EPS:
        return False
    if p_plus > 1.0 - BRANCH_EPS:
        return True
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return bool(gen.uniform() < p_plus)


def measure_mode_conserving(
    state: ModeState, j: int, rng: RngStream | np.random.Generator
) -> tuple[ModeState, FermionOutcome]:
    """Number measurement of mode j on a zero-pairing state.

    Outcome probabilities (1 +- Mc_jj)/2 for empty/filled; the update is
    Mc'_uv = Mc_uv -+ Mc_uj Mc_jv / (1 +- Mc_jj) off the measured mode, and
    row/column j collapses to +-1 on the diagonal.  Branches with
    probability below 1e-12 are forced to the other branch.
    """
    mc = state.matrix
    n = state.n
    if not 0 <= j < n:
        raise ValueError(f"mode index {j} out of range for n={n}")
    eta = float(np.real(mc[j, j]))
    p_plus = 0.5 * (1.0 + eta)
    p_plus = min(max(p_plus, 0.0), 1.0)
    empty = _pick_branch(p_plus, rng)
    sign = 1.0 if empty else -1.0
    denom = 1.0 + sign * eta
    col = mc[:, j].copy()
    row = mc[j, :].copy()
    out = mc - sign * np.outer(col, row) / denom
    out[j, :] = 0.0
    out[:, j] = 0.0
    out[j, j] = sign
    prob = p_plus if empty else 1.0 - p_plus
    return ModeState(_hermitize(out)), FermionOutcome(
        branch="empty" if empty else "filled", probability=prob
    )


def delta_s_proxy_conserving(state: ModeState, j: int) -> float:
    """Outcome-averaged proxy-entropy change for measuring mode j:
    -(log 2) (1 - (Mc^2)_jj)^2 / (1 - Mc_jj^2), always <= 0.

    Returns 0 when the measured mode is already pure.
    """
    mc = state.matrix
    eta = float(np.real(mc[j, j]))
    if abs(eta) >= 1.0 - PURE_MODE_EPS:
        return 0.0
    msq_jj = float(np.real(mc[j, :] @ mc[:, j]))
    return -LOG2 * (1.0 - msq_jj) ** 2 / (1.0 - eta**2)


def measure_mode_general(
    state: MajoranaState, j: int, rng: RngStream | np.random.Generator
) -> tuple[MajoranaState, FermionOutcome]:
    """Number measurement of mode j on a general Gaussian state.

    With a = M_{2j,2j+1}: probabilities (1 +- a)/2 for empty/filled, and
    M' = +-K + P (M +- M K M / (1 +- a)) P with K the elementary
    antisymmetric unit on rows (2j, 2j+1) and P the projector off them.
    """
    m = state.matrix
    n = state.n
    if not 0 <= j < n:
        raise ValueError(f"mode index {j} out of range for n={n}")
    r, rr = 2 * j, 2 * j + 1
    alpha = float(m[r, rr])
    p_plus = 0.5 * (1.0 + alpha)
    p_plus = min(max(p_plus, 0.0), 1.0)
    empty = _pick_branch(p_plus, rng)
    sign = 1.0 if empty else -1.0
    # M K M with K supported on rows/cols (r, rr):
    # (MKM)_pq = M_pr M_rrq ... = M_p,r M_rr,q - M_p,rr M_r,q
    col_r, col_rr = m[:, r], m[:, rr]
    row_r, row_rr = m[r, :], m[rr, :]
    mkm = np.outer(col_r, row_rr) - np.outer(col_rr, row_r)
    out = m + sign * mkm / (1.0 + sign * alpha)
    out[r, :] = 0.0
    out[rr, :] = 0.0
    out[:, r] = 0.0
    out[:, rr] = 0.0
    out[r, rr] = sign
    out[rr, r] = -sign
    prob = p_plus if empty else 1.0 - p_plus
    return MajoranaState(_antisymmetrize(out)), FermionOutcome(
        branch="empty" if empty else "filled", probability=prob
    )


def delta_s_proxy_general(state: MajoranaState, j: int) -> float:
    """Outcome-averaged proxy-entropy change for measuring mode j:
    -(log 2)/(1 - a^2) * det of the 2 x 2 block of Q (1 + M^2) Q.

    Returns 0 when the measured mode is already pure (|a| ~ 1).
    """
    m = state.matrix
    r, rr = 2 * j, 2 * j + 1
    alpha = float(m[r, rr])
    if abs(alpha) >= 1.0 - PURE_MODE_EPS:
        return 0.0
    rows = m[[r, rr], :]
    # (M^2)_{ab} = sum_k M_ak M_kb = -sum_k M_ak M_bk for antisymmetric M
    block = np.eye(2) - rows @ rows.T
    det = block[0, 0] * block[1, 1] - block[0, 1] * block[1, 0]
    return -LOG2 * det / (1.0 - alpha**2)


# ---------------------------------------------------------------------------
# Purification ensembles
# ---------------------------------------------------------------------------


@dataclass
class PurificationEnsemble:
    """Ensemble summary of alternating Haar rotations and mode-1 measurements.

    ``mean_density`` holds the ensemble mean proxy-entropy density
    s(t) = S_proxy / (n log 2) at each recorded step, with its stderr.
    """

    variant: str
    n: int
    walkers: int
    seed: int
    steps_run: int = 0
    times: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    mean_density: np.ndarray = field(default_factory=lambda: np.empty(0))
    stderr_density: np.ndarray = field(default_factory=lambda: np.empty(0))
    mean_renyi2: np.ndarray | None = None
    walker_s_proxy: np.ndarray | None = None  # (recorded steps, walkers), nats
    walker_renyi2: np.ndarray | None = None
    bound_violations: int = 0
    half_entropy_time: int | None = None
    order1_purity_time: int | None = None

    def bound_margin(self) -> np.ndarray:
        """Reference upper bound + 3 se - s(t); negative entries violate it.

        conserving: s(t) <= (1 + t/n)^-1 from |ds| >= s^2/n.
        general: the pairing-case inequality is weaker,
        |ds| >= s^2/n - s/(2n^2), so the reference is the recursion
        v <- v - v^2/n + v/(2n^2) which that inequality bounds.
        """
        n = self.n
        if self.variant == "conserving":
            bound = 1.0 / (1.0 + self.times / n)
        else:
            horizon = int(self.times.max()) if self.times.size else 0
            v = np.empty(horizon + 1)
            v[0] = 1.0
            for t in range(horizon):
                v[t + 1] = v[t] - v[t] ** 2 / n + v[t] / (2.0 * n**2)
            bound = v[self.times]
        return bound + 3.0 * self.stderr_density - self.mean_density


def run_purification(
    n: int,
    steps: int,
    variant: str,
    walkers: int,
    seed: int,
    record_renyi2: bool = False,
    stop_at_order1: bool = True,
    keep_walker_series: bool = False,
) -> PurificationEnsemble:
    """From the maximally mixed state, alternate Haar free-fermion unitaries
    (U(n) for ``conserving``, SO(2n) for ``general``) with a number
    measurement of mode 1, tracking the mean entropy density.

    Checks s(t) <= (1 + t/n)^-1 + 3 stderr at every recorded step and counts
    violations.  ``stop_at_order1`` ends the run once the mean proxy entropy
    drops below log 2 (purity of order 1), after which both characteristic
    times are known.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if variant not in ("conserving", "general"):
        raise ValueError(f"unknown variant {variant!r}")
    gen = RngStream(seed).generator()
    out = PurificationEnsemble(variant=variant, n=n, walkers=walkers, seed=seed)
    times, means, stderrs, renyis = [], [], [], []
    series_s, series_r = [], []

    if variant == "conserving":
        states = np.zeros((walkers, n, n), dtype=complex)
    else:
        states = np.zeros((walkers, 2 * n, 2 * n))

    def record(t: int):
        if variant == "conserving":
            tr_sq = np.einsum("wij,wij->w", states.conj(), states).real
            s_vals = LOG2 * (n - tr_sq)
        else:
            tr_sq = np.einsum("wij,wij->w", states, states)
            s_vals = LOG2 * (n - 0.5 * tr_sq)
        dens = s_vals / (n * LOG2)
        times.append(t)
        means.append(dens.mean())
        stderrs.append(dens.std(ddof=1) / np.sqrt(walkers))
        if keep_walker_series:
            series_s.append(s_vals.copy())
        if record_renyi2:
            if variant == "conserving":
                eigs = np.abs(np.linalg.eigvalsh(states))
            else:
                lam_all = np.linalg.eigvalsh(1j * states)
                eigs = np.clip(lam_all[:, ::-1][:, :n], 0.0, 1.0)
            r_vals = n * LOG2 - np.sum(np.log1p(eigs**2), axis=1)
            renyis.append(float(r_vals.mean()))
            if keep_walker_series:
                series_r.append(r_vals.copy())
        return s_vals.mean()

    mean_s = record(0)
    for t in range(1, steps + 1):
        if variant == "conserving":
            u = haar_unitary_batch(n, walkers, gen)
            states = np.einsum("wij,wjk,wlk->wil", u, states, u.conj())
            states = _hermitize(states)
            eta = states[:, 0, 0].real
            p_plus = np.clip(0.5 * (1.0 + eta), 0.0, 1.0)
            empty = _branch_batch(p_plus, gen)
            sign = np.where(empty, 1.0, -1.0)
            col = states[:, :, 0].copy()
            row = states[:, 0, :].copy()
            states -= (sign / (1.0 + sign * eta))[:, None, None] * (
                col[:, :, None] * row[:, None, :]
            )
            states[:, 0, :] = 0.0
            states[:, :, 0] = 0.0
            states[:, 0, 0] = sign
            states = _hermitize(states)
        else:
            o = haar_special_orthogonal_batch(2 * n, walkers, gen)
            states = np.einsum("wij,wjk,wlk->wil", o, states, o)
            states = _antisymmetrize(states)
            alpha = states[:, 0, 1].copy()
            p_plus = np.clip(0.5 * (1.0 + alpha), 0.0, 1.0)
            empty = _branch_batch(p_plus, gen)
            sign = np.where(empty, 1.0, -1.0)
            col_r = states[:, :, 0].copy()
            col_rr = states[:, :, 1].copy()
            row_r = states[:, 0, :].copy()
            row_rr = states[:, 1, :].copy()
            mkm = col_r[:, :, None] * row_rr[:, None, :] - col_rr[:, :, None] * row_r[:, None, :]
            states += (sign / (1.0 + sign * alpha))[:, None, None] * mkm
            states[:, :2, :] = 0.0
            states[:, :, :2] = 0.0
            states[:, 0, 1] = sign
            states[:, 1, 0] = -sign
            states = _antisymmetrize(states)
        mean_s = record(t)
        out.steps_run = t
        if stop_at_order1 and mean_s <= LOG2:
            break

    out.times = np.asarray(times)
    out.mean_density = np.asarray(means)
    out.stderr_density = np.asarray(stderrs)
    if record_renyi2:
        out.mean_renyi2 = np.asarray(renyis)
    if keep_walker_series:
        out.walker_s_proxy = np.asarray(series_s)
        if record_renyi2:
            out.walker_renyi2 = np.asarray(series_r)
    out.bound_violations = int(np.sum(out.bound_margin() < 0.0))
    dens = out.mean_density
    below_half = np.nonzero(dens <= 0.5)[0]
    out.half_entropy_time = int(out.times[below_half[0]]) if below_half.size else None
    below_order1 = np.nonzero(dens * n * LOG2 <= LOG2)[0]
    out.order1_purity_time = (
        int(out.times[below_order1[0]]) if below_order1.size else None
    )
    return out


def _branch_batch(p_plus: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    draws = gen.uniform(size=p_plus.size)
    empty = draws < p_plus
    empty[p_plus < BRANCH_EPS] = False
    empty[p_plus > 1.0 - BRANCH_EPS] = True
    return empty


# ---------------------------------------------------------------------------
# Pairing-case mean decrease vs the quartic-moment prediction
# ---------------------------------------------------------------------------


def mc_delta_s_pairing(
    n: int,
    samples: int,
    rng: RngStream | np.random.Generator,
    base_state: MajoranaState | None = None,
) -> dict:
    """Mean |Delta S_proxy| for measuring mode 1 on O M O^T over Haar SO(2n).

    Compares the Monte Carlo mean against the leading-order prediction
    (log 2 / 4 n^2) [ (Tr(1+M^2))^2 - Tr (1+M^2)^2 ] and against the
    entropy-density lower bound.  Only the first two rows of the rotated
    matrix are ever formed.
    """
    if n < 8:
        raise ValueError(f"need n >= 8, got {n}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    state = base_state if base_state is not None else MajoranaState.maximally_mixed(n)
    m = state.matrix
    msq = m @ m
    one_plus = np.eye(2 * n) + msq
    tr1 = float(np.trace(one_plus))
    tr2 = float(np.vdot(one_plus, one_plus).real)
    predicted = (LOG2 / (4 * n**2)) * (tr1**2 - tr2)
    sp = s_proxy(state)
    dens = sp / (n * LOG2)
    lower_bound = LOG2 * (dens**2 - dens / (2 * n))

    vals = np.empty(samples)
    done = 0
    chunk = 1024
    while done < samples:
        take = min(chunk, samples - done)
        o = haar_special_orthogonal_batch(2 * n, take, gen)
        # rows 0..1 of O M O^T
        rows = np.einsum("sij,jk,slk->sil", o[:, :2, :], m, o)
        alpha = rows[:, 0, 1]
        block = np.eye(2)[None] - np.einsum("sik,sjk->sij", rows, rows)
        det = block[:, 0, 0] * block[:, 1, 1] - block[:, 0, 1] * block[:, 1, 0]
        vals[done : done + take] = LOG2 * det / (1.0 - alpha**2)
        done += take
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(samples))
    return {
        "n": n,
        "samples": samples,
        "mc_mean_abs_delta": mean,
        "mc_stderr": se,
        "predicted_leading": predicted,
        "relative_error": abs(mean - predicted) / predicted if predicted > 0 else 0.0,
        "lower_bound": lower_bound,
        "lower_bound_ok": mean >= lower_bound - 3 * se,
        "s_proxy": sp,
    }
