"""Linear and nonlinear solution drivers, error indicator and p-adaptivity.

The nonlinear residual is ``r(q, lam) = lam * f_hat - f_int(q)`` over the
free DOFs ``q``; ``f_hat`` is the reference load (load factor 1 reaches the
target load).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .element import (
    ElementInversionError, batch_tangent, element_loads, local_keys,
)
from .model import ShellModel

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    """Singular (or numerically singular) stiffness matrix."""


class ConvergenceError(SolverError):
    """Newton iterations failed to converge; the caller should cut the step."""


class ArcLengthError(SolverError):
    """Continuation aborted; ``trace`` keeps every converged step."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


# --- linear algebra ------------------------------------------------------------

def _mode_report(K, modes):
    if not modes:
        return ""
    nK = spla.norm(K, 1) if sp.issparse(K) else np.linalg.norm(K, 1)
    scores = {}
    for name, r in modes.items():
        r = np.asarray(r, float)
        nr = np.linalg.norm(r)
        if nr > 0:
            scores[name] = np.linalg.norm(K @ r) / (nK * nr)
    if not scores:
        return ""
    name = min(scores, key=scores.get)
    return f"; candidate null-space mode: {name} (|K r|/|K||r| = {scores[name]:.1e})"


class Factorization:
    """Sparse LU of a symmetrically diagonal-scaled matrix with iterative refinement.

    Shell stiffness matrices are badly scaled (membrane versus bending
    versus thickness stretch), so the matrix is equilibrated with
    ``D = |diag K|^{-1/2}`` before factorisation.  A diagonal-pivoting
    factorisation on a symmetric ordering is tried first (far less fill);
    when a solve misses ``tol`` the matrix is refactored with partial
    pivoting.
    """

    def __init__(self, K, modes=None, pivot_tol: float = 1e-14, tol: float = 1e-10):
        K = sp.csc_matrix(K)
        self.K = K
        self.modes = modes
        self.pivot_tol = pivot_tol
        self.tol = tol
        diag = np.abs(K.diagonal())
        diag[diag == 0] = 1.0
        self.d = 1.0 / np.sqrt(diag)
        self.Ks = sp.csc_matrix(sp.diags(self.d) @ K @ sp.diags(self.d))
        self.absK = abs(K)
        self.pivoting = False
        try:
            self.lu = spla.splu(self.Ks, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                options=dict(SymmetricMode=True))
            self._check_pivots()
        except (RuntimeError, SingularSystemError):
            self._refactor()

    def _check_pivots(self):
        piv = np.abs(self.lu.U.diagonal())
        if not np.all(np.isfinite(piv)) or piv.min() <= self.pivot_tol * piv.max():
            raise SingularSystemError(
                f"stiffness matrix is numerically singular (pivot ratio {piv.min() / piv.max():.1e})"
                + _mode_report(self.K, self.modes))

    def _refactor(self):
        self.pivoting = True
        try:
            self.lu = spla.splu(self.Ks)
        except RuntimeError as exc:
            raise SingularSystemError(f"singular stiffness matrix ({exc})"
                                      + _mode_report(self.K, self.modes)) from None
        self._check_pivots()

    def _solve(self, b, refine):
        x = self.d * self.lu.solve(self.d * b)
        for _ in range(refine):
            r = b - self.K @ x
            x = x + self.d * self.lu.solve(self.d * r)
        return x

    def solve(self, b, refine: int = 2) -> np.ndarray:
        b = np.asarray(b, float)
        x = self._solve(b, refine)
        if not self.pivoting and not (np.all(np.isfinite(x))
                                      and self.backward_error(x, b) <= self.tol):
            log.debug("diagonal pivoting inaccurate; refactoring with partial pivoting")
            self._refactor()
            x = self._solve(b, refine)
        return x

    def backward_error(self, x, b) -> float:
        """``|K x - b| / (|K||x| + |b|)`` measured componentwise-normwise."""
        num = np.linalg.norm(self.K @ x - b)
        den = np.linalg.norm(self.absK @ np.abs(x) + np.abs(b))
        return num / den if den > 0 else 0.0


def linear_solve(K, b, modes=None, tol: float = 1e-10) -> np.ndarray:
    """Solve ``K x = b`` with a sparse LU factorisation.

    Parameters
    ----------
    modes : dict, optional
        Named candidate null-space vectors (e.g. rigid-body modes) used to
        make the singularity diagnostic specific.
    tol : float
        Bound on the backward error ``|Kx - b| / (|K||x| + |b|)``.

    Raises
    ------
    SingularSystemError
        On an exactly singular matrix, a vanishing pivot or a solution that
        misses the tolerance.
    """
    K = sp.csc_matrix(K)
    b = np.asarray(b, float)
    if K.shape[0] == 0:
        return np.zeros(0)
    fac = Factorization(K, modes, tol=tol)
    x = fac.solve(b)
    err = fac.backward_error(x, b)
    if not np.all(np.isfinite(x)) or err > tol:
        raise SingularSystemError(f"linear solve backward error {err:.1e} exceeds {tol:.0e}"
                                  + _mode_report(K, modes))
    return x


def reference_coefficients(model: ShellModel):
    """Interpolation coefficients of the reference position in the ``u`` basis.

    Returns ``(node_X (N, 2, 3), edge_X (E, 2, 3) or None)``: bottom/top
    vertex positions and, for quadratic geometry, the lowest triangle-edge
    coefficients of both layers.
    """
    mesh = model.mesh
    h = 0.5 * mesh.thickness[:, None] * mesh.directors
    node_X = np.stack([mesh.nodes - h, mesh.nodes + h], axis=1)
    if mesh.geometry_order == 1:
        return node_X, None
    # the element Jacobian uses the element-mean thickness, edges use their end-node mean
    a_e = mesh.thickness[mesh.edges].mean(axis=1)[:, None]
    edge_X = np.stack([mesh.edge_z - 0.5 * a_e * mesh.edge_d,
                       mesh.edge_z + 0.5 * a_e * mesh.edge_d], axis=1)
    return node_X, edge_X


def displacement_from_map(model: ShellModel, phi) -> np.ndarray:
    """Full DOF vector interpolating ``u = phi(X) - X`` for an affine map ``phi``.

    Exact for affine maps on flat geometry and, when edge DOFs exist, on
    quadratic geometry.
    """
    d = model.dofmap
    node_X, edge_X = reference_coefficients(model)
    U = np.zeros(d.n_dofs)
    lin = phi(np.zeros(3))
    for n in range(model.mesh.n_nodes):
        for s in (0, 1):
            U[d.node_dofs(n, s)] = phi(node_X[n, s]) - node_X[n, s]
    if edge_X is not None:
        sel = np.flatnonzero((d.kind == 1) & (d.fn == 0))
        e, s, c = d.entity[sel], d.layer[sel], d.comp[sel]
        # affine map acts linearly on the quadratic coefficients
        for idx, ee, ss, cc in zip(sel, e, s, c):
            X = edge_X[ee, ss]
            U[idx] = (phi(X) - lin - X)[cc]
    return U


def rigid_body_modes(model: ShellModel) -> dict:
    """Six infinitesimal rigid-body modes as full DOF vectors."""
    modes = {}
    for k, name in enumerate("xyz"):
        e = np.eye(3)[k]
        modes[f"translation_{name}"] = displacement_from_map(model, lambda X, e=e: X + e)
        modes[f"rotation_{name}"] = displacement_from_map(model, lambda X, e=e: X + np.cross(e, X))
    return modes


def solve_linear_problem(model: ShellModel, loads, modes=True):
    """Small-displacement solution ``U`` (full DOF vector) and the load vector."""
    f = model.load_vector(loads)
    U = np.zeros(model.n_dofs)
    _, K = model.tangent(U)
    fr = model.free
    named = None
    if modes:
        named = {k: v[fr] for k, v in rigid_body_modes(model).items()}
    U[fr] = linear_solve(K[fr][:, fr], f[fr], named)
    return U, f


# --- Newton -------------------------------------------------------------------

@dataclass
class NewtonConfig:
    atol: float = 1e-10
    rtol: float = 1e-9
    max_iter: int = 25
    symmetrize: bool = False
    line_search: bool = True

    def __post_init__(self):
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class NewtonLog:
    residuals: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _reduced_system(model, q, symmetrize):
    f, K = model.tangent(model.expand(q))
    fr = model.free
    Kr = K[fr][:, fr]
    if symmetrize:
        Kr = 0.5 * (Kr + Kr.T)
    return f[fr], Kr.tocsc()


ROUNDOFF_FLOOR = 1e-15  # observed noise is ~1e-16 |K||q|


def _tolerance(cfg, fext):
    return max(cfg.atol, cfg.rtol * np.linalg.norm(fext))


def _roundoff(K, q) -> float:
    """Residual level reachable in floating point, ``~ eps |K| |q|``."""
    return ROUNDOFF_FLOOR * float(np.linalg.norm(abs(K) @ np.abs(q)))


def newton_solve(model: ShellModel, q0, fext, config: NewtonConfig | None = None):
    """Newton iterations for ``f_int(q) = fext`` (free DOFs).

    Returns ``(q, NewtonLog)``; raises :class:`ConvergenceError` when the
    residual does not drop below tolerance within ``max_iter`` iterations.
    """
    cfg = config or NewtonConfig()
    q = np.array(q0, float)
    fext = np.asarray(fext, float)
    tol = _tolerance(cfg, fext)
    nlog = NewtonLog()
    for it in range(cfg.max_iter + 1):
        try:
            fint, K = _reduced_system(model, q, cfg.symmetrize)
        except ElementInversionError as exc:
            raise ConvergenceError(f"element inversion at iteration {it}: {exc}") from None
        r = fext - fint
        rn = float(np.linalg.norm(r))
        nlog.residuals.append(rn)
        if rn <= max(tol, _roundoff(K, q)):
            nlog.iterations = it
            nlog.converged = True
            return q, nlog
        if it == cfg.max_iter or not np.isfinite(rn):
            break
        dq = linear_solve(K, r)
        eta = 1.0
        if cfg.line_search:
            eta = _line_search(lambda e: fext - model.internal_forces(model.expand(q + e * dq))[model.free],
                               dq, r)
        q = q + eta * dq
    nlog.iterations = cfg.max_iter
    raise ConvergenceError(f"Newton did not converge in {cfg.max_iter} iterations "
                           f"(residual {nlog.residuals[-1]:.3e}, tol {tol:.3e})")


def _line_search(residual_at, dq, r0, max_cuts: int = 5, ratio: float = 0.8):
    """Backtracking on ``s(eta) = dq . r(eta)``; returns the step length."""
    s0 = float(dq @ r0)
    if s0 == 0:
        return 1.0
    eta = 1.0
    for _ in range(max_cuts + 1):
        try:
            s = float(dq @ residual_at(eta))
        except ElementInversionError:
            s = np.inf
        if abs(s) <= ratio * abs(s0):
            return eta
        eta *= 0.5
    return 1.0


# --- arc-length -------------------------------------------------------------------

@dataclass
class ArcConfig:
    ds0: float = 0.05
    ds_min: float = 1e-6
    ds_max: float | None = None
    psi: float = 1.0
    max_steps: int = 400
    target_iters: int = 5
    lam_target: float = 1.0
    newton: NewtonConfig = field(default_factory=lambda: NewtonConfig(rtol=1e-8, max_iter=12))
    fail_at_steps: tuple = ()  # forced Newton failures (first attempt of these steps)
    max_cuts: int = 12


@dataclass
class ArcState:
    lam: float = 0.0
    ds: float = 0.0
    dq_prev: np.ndarray | None = None
    dlam_prev: float = 0.0
    step: int = 0
    s_ref2: float | None = None
    cuts: int = 0
    forced: int = 0

    def __post_init__(self):
        if self.ds < 0:
            raise ValueError("arc length must be positive")


class Trace:
    """Load-displacement record, one row per converged step."""

    def __init__(self, monitors: dict, target: float = 1.0):
        self.monitors = dict(monitors)
        self.target = target
        self.rows = []
        self.cuts = 0  # arc-length reductions after failed steps
        self.forced = 0  # of which deliberately injected

    def record(self, step, lam, disps: dict, iters: int):
        if self.rows and step <= self.rows[-1][0]:
            raise ValueError("trace steps must increase")
        row = [step, lam, lam * self.target]
        for name in self.monitors:
            row += list(np.asarray(disps[name], float))
        row.append(int(iters))
        self.rows.append(row)

    @property
    def header(self):
        cols = ["step", "lambda", "load"]
        for name in self.monitors:
            cols += [f"{name}_dx", f"{name}_dy", f"{name}_dz"]
        return cols + ["iters"]

    def column(self, name) -> np.ndarray:
        return np.array([r[self.header.index(name)] for r in self.rows])

    def monitored(self, name) -> np.ndarray:
        """Scalar monitored value (displacement projected on the monitor direction)."""
        i = self.header.index(f"{name}_dx")
        d = np.asarray(self.monitors[name].direction, float)
        return np.array([np.dot(r[i:i + 3], d) for r in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header)
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(x)) for x in r[1:-1]] + [r[-1]])

    def __len__(self):
        return len(self.rows)


def monitored_displacements(model: ShellModel, U, monitors: dict) -> dict:
    return {k: model.node_displacement(U, m.node) for k, m in monitors.items()}


def _solve_pair(K, r, fhat):
    fac = Factorization(K)
    return fac.solve(r), fac.solve(fhat)


def arc_length_step(model: ShellModel, q0, fhat, arc: ArcState, config: ArcConfig):
    """One Crisfield spherical arc-length step from the converged state ``q0``.

    Returns ``(q, lam, dq, dlam, iterations)``; raises
    :class:`ConvergenceError` when the corrector fails (complex roots,
    inversion, or no convergence), leaving ``arc`` untouched.
    """
    cfg = config.newton
    psi2 = config.psi ** 2
    try:
        fint0, K = _reduced_system(model, q0, cfg.symmetrize)
    except ElementInversionError as exc:
        raise ConvergenceError(str(exc)) from None
    _, dqt = _solve_pair(K, np.zeros_like(fhat), fhat)
    if arc.s_ref2 is None:
        arc.s_ref2 = float(dqt @ dqt)
    s2 = arc.s_ref2
    dlam = arc.ds / math.sqrt(dqt @ dqt + psi2 * s2)
    if arc.dq_prev is not None and float(dqt @ arc.dq_prev + psi2 * s2 * arc.dlam_prev) < 0:
        dlam = -dlam
    dq = dlam * dqt
    tol = _tolerance(cfg, fhat)
    for it in range(1, cfg.max_iter + 1):
        lam = arc.lam + dlam
        try:
            fint, K = _reduced_system(model, q0 + dq, cfg.symmetrize)
        except ElementInversionError as exc:
            raise ConvergenceError(f"inversion in corrector: {exc}") from None
        r = lam * fhat - fint
        rn = np.linalg.norm(r)
        cons = (dq @ dq + psi2 * s2 * dlam ** 2 - arc.ds ** 2) / arc.ds ** 2
        tol_it = max(tol * max(abs(lam), 1e-3), cfg.atol, _roundoff(K, q0 + dq))
        if rn <= tol_it and abs(cons) < 1e-6 and it > 1:
            return q0 + dq, lam, dq, dlam, it - 1
        if not np.isfinite(rn):
            break
        dqr, dqt = _solve_pair(K, r, fhat)
        a = dqt @ dqt + psi2 * s2
        u = dq + dqr
        b = 2 * (dqt @ u) + 2 * psi2 * s2 * dlam
        c = u @ u + psi2 * s2 * dlam ** 2 - arc.ds ** 2
        disc = b * b - 4 * a * c
        if disc < 0:
            raise ConvergenceError("complex roots of the arc-length constraint")
        sq = math.sqrt(disc)
        best = None
        for root in ((-b + sq) / (2 * a), (-b - sq) / (2 * a)):
            cand = u + root * dqt
            cosv = (cand @ dq + psi2 * s2 * (dlam + root) * dlam) / (
                math.sqrt(cand @ cand + psi2 * s2 * (dlam + root) ** 2)
                * math.sqrt(dq @ dq + psi2 * s2 * dlam ** 2) + 1e-300)
            if best is None or cosv > best[0]:
                best = (cosv, root)
        dl = best[1]
        ddq = dqr + dl * dqt
        eta = 1.0
        if cfg.line_search:
            def res_at(e):
                qq = q0 + dq + e * ddq
                return (arc.lam + dlam + e * dl) * fhat - model.internal_forces(model.expand(qq))[model.free]
            eta = _line_search(res_at, ddq, r)
        dq = dq + eta * ddq
        dlam = dlam + eta * dl
    raise ConvergenceError(f"arc-length corrector did not converge in {cfg.max_iter} iterations")


def arc_length(model: ShellModel, fhat_full, config: ArcConfig, monitors=None, target=1.0,
               callback=None):
    """Continuation from the reference state to ``lam_target``.

    Returns ``(U, Trace)``.  When a step would pass ``lam_target`` the run
    finishes with a load-controlled Newton solve at exactly ``lam_target``.
    """
    fhat = np.asarray(fhat_full, float)[model.free]
    monitors = monitors or {}
    trace = Trace(monitors, target)
    q = np.zeros(model.n_free)
    arc = ArcState(lam=0.0, ds=config.ds0)
    ds_max = config.ds_max or 4 * config.ds0
    forced = set(config.fail_at_steps)
    trace.record(0, 0.0, monitored_displacements(model, model.expand(q), monitors), 0)
    while arc.step < config.max_steps:
        step = arc.step + 1
        try:
            if step in forced:
                forced.discard(step)
                arc.forced += 1
                raise ConvergenceError(f"forced failure at step {step}")
            q_new, lam_new, dq, dlam, iters = arc_length_step(model, q, fhat, arc, config)
        except (ConvergenceError, SingularSystemError) as exc:
            arc.cuts += 1
            arc.ds *= 0.5
            log.info("step %d failed (%s); cutting arc length to %.3e", step, exc, arc.ds)
            if arc.ds < config.ds_min:
                raise ArcLengthError(f"arc length fell below {config.ds_min:g} at step {step}",
                                     trace) from None
            continue
        if lam_new >= config.lam_target - 1e-12 and arc.lam < config.lam_target:
            # finish exactly at the target load
            frac = (config.lam_target - arc.lam) / (lam_new - arc.lam)
            try:
                q_fin, nlog = newton_solve(model, q + frac * dq, config.lam_target * fhat,
                                           config.newton)
            except (ConvergenceError, SingularSystemError) as exc:
                arc.cuts += 1
                arc.ds *= 0.5
                log.info("final load solve failed (%s); cutting arc length", exc)
                if arc.ds < config.ds_min:
                    raise ArcLengthError("could not reach the target load", trace) from None
                continue
            arc.step = step
            arc.lam = config.lam_target
            q = q_fin
            U = model.expand(q)
            trace.record(step, arc.lam, monitored_displacements(model, U, monitors), nlog.iterations)
            trace.cuts, trace.forced = arc.cuts, arc.forced
            if callback:
                callback(step, U, arc.lam)
            return U, trace
        arc.step = step
        arc.lam = lam_new
        arc.dq_prev, arc.dlam_prev = dq, dlam
        q = q_new
        U = model.expand(q)
        trace.record(step, arc.lam, monitored_displacements(model, U, monitors), iters)
        if callback:
            callback(step, U, arc.lam)
        factor = min(4.0, max(0.25, math.sqrt(config.target_iters / max(iters, 1))))
        arc.ds = min(arc.ds * factor, ds_max)
    raise ArcLengthError(f"target load not reached in {config.max_steps} steps", trace)


# --- error indicator and p-adaptivity ------------------------------------------------

def _enriched(model: ShellModel) -> ShellModel:
    return ShellModel(model.mesh, model.material, model.dofmap.face_orders + 1, model.dofmap.p_v,
                      model.dofmap.p_w, model.bcs)


def _batch_embedding(model: ShellModel, plus: ShellModel, batch):
    """Positions of the current local DOFs inside the enriched layout of ``batch``."""
    spec_cur = model.dofmap.elem_specs
    e0 = int(batch.elems[0])
    keys_plus = local_keys(plus.dofmap.elem_specs[e0])
    keys_cur = {k: i for i, k in enumerate(local_keys(spec_cur[e0]))}
    pos_plus = np.array([i for i, k in enumerate(keys_plus) if k in keys_cur], dtype=np.int64)
    pos_cur = np.array([keys_cur[keys_plus[i]] for i in pos_plus], dtype=np.int64)
    cur_dofs = np.stack([model.dofmap.elem_dofs[e] for e in batch.elems])
    return pos_plus, cur_dofs[:, pos_cur], len(keys_plus)


def embed(model: ShellModel, plus: ShellModel, U) -> np.ndarray:
    """The field ``U`` of ``model`` written in the DOFs of the richer ``plus``.

    Exact because the bases are hierarchical: the enriched space keeps every
    current function and only adds new ones (whose coefficients are zero).
    """
    Up = np.zeros(plus.n_dofs)
    for b in plus.batches:
        pos_plus, cur, _ = _batch_embedding(model, plus, b)
        Up[b.dofs[:, pos_plus]] = U[cur]
    return Up


def error_indicator(model: ShellModel, U, loads, lam: float = 1.0,
                    method: str = "global") -> np.ndarray:
    """Per-element error indicator from hierarchical enrichment to order ``p + 1``.

    ``method="global"`` solves the enriched linear problem once and returns
    the element energies ``d_e . K_e d_e / 2`` of the difference
    ``d = U_{p+1} - U``; they sum to the energy gained by the enrichment.
    ``method="local"`` keeps the neighbours frozen and solves, element by
    element, ``K_EE d = f_E - f_int,E`` for the new functions ``E`` only.
    """
    if method not in ("global", "local"):
        raise ValueError(f"unknown indicator method {method!r}")
    plus = _enriched(model)
    eta = np.zeros(model.mesh.n_tris)
    if method == "global":
        Up, _ = solve_linear_problem(plus, loads)
        d = lam * Up - embed(model, plus, U)
        for b in plus.batches:
            de = d[b.dofs]
            _, K = batch_tangent(b.shapes, b.geometry, np.zeros_like(de), model.material)
            eta[b.elems] = 0.5 * np.einsum("ei,eij,ej->e", de, K, de)
        return eta
    fixed_plus = np.zeros(plus.n_dofs, bool)
    fixed_plus[plus.constraints.fixed_array] = True
    for b in plus.batches:
        pos_plus, cur, nloc = _batch_embedding(model, plus, b)
        new = np.setdiff1d(np.arange(nloc), pos_plus)
        X = np.zeros((len(b.elems), nloc))
        X[:, pos_plus] = U[cur]
        f_int, K = batch_tangent(b.shapes, b.geometry, X, model.material)
        for i, e in enumerate(b.elems):
            E = new[~fixed_plus[b.dofs[i, new]]]
            if len(E) == 0:
                continue
            fe = np.zeros(nloc)
            fl = element_loads(model.mesh, plus.dofmap.elem_specs[e], int(e), loads)
            fe[:len(fl)] = lam * fl
            r = (fe - f_int[i])[E]
            KEE = K[i][np.ix_(E, E)]
            d = np.linalg.solve(KEE, r)
            eta[e] = 0.5 * float(d @ KEE @ d)
    return eta


def p_adapt(face_orders, indicator, cap: int = 8, fraction: float = 1 / 3) -> np.ndarray:
    """Raise the face order of the top ``ceil(N * fraction)`` elements by one.

    Ties are broken by element id; orders never exceed ``cap``.
    """
    orders = np.array(face_orders, dtype=np.int64)
    ind = np.asarray(indicator, float)
    n = len(orders)
    if ind.shape != (n,):
        raise ValueError("indicator must have one entry per element")
    k = math.ceil(n * fraction)
    ranking = np.lexsort((np.arange(n), -ind))
    sel = ranking[:k]
    orders[sel] = np.minimum(orders[sel] + 1, cap)
    return orders
