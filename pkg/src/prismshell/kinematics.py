"""Convected bases, deformation, strain and stress measures.

Displacements are split into the Cartesian field ``u`` carried by the top
and bottom triangles and the coefficient fields ``v`` (along ``g_2``) and
``w`` (along ``g_0``, ``g_1``) of the through-thickness enrichment.  The
convected frame is the push-forward ``g_a = MF G_a`` of the reference frame
by the part of the deformation gradient driven by ``u`` alone, and the
enrichment gradients act in that frame, which gives

    F = MF (I + G_a (x) grad c^a)

with ``c = (w_0, w_1, v)``.  All functions broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

I3 = np.eye(3)


@dataclass(frozen=True)
class Material:
    """Isotropic St. Venant-Kirchhoff material."""

    young: float
    poisson: float

    def __post_init__(self):
        if not self.young > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.young}")
        if not -1.0 < self.poisson < 0.5:
            raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {self.poisson}")

    @property
    def lame_lambda(self) -> float:
        E, nu = self.young, self.poisson
        return E * nu / ((1 + nu) * (1 - 2 * nu))

    @property
    def lame_mu(self) -> float:
        return self.young / (2 * (1 + self.poisson))


class KinState(NamedTuple):
    MF: np.ndarray  # I + grad u
    H: np.ndarray  # I + G_a (x) grad c^a
    F: np.ndarray  # Cartesian deformation gradient
    g: np.ndarray  # convected covariant basis, columns
    g_contra: np.ndarray
    g_metric: np.ndarray
    F_local: np.ndarray  # F^a_A = g^a . F G_A


def convected_basis(MF, G):
    """Current frame ``g_a = MF G_a``, its dual and the metric ``g_a . g_b``.

    ``G`` holds the reference frame vectors as columns.
    """
    MF = np.asarray(MF, float)
    det = np.linalg.det(MF)
    if np.any(det <= 0):
        raise ValueError(f"deformation gradient is not admissible (det = {np.min(det):.3e})")
    g = MF @ G
    g_contra = np.swapaxes(np.linalg.inv(g), -1, -2)
    metric = np.swapaxes(g, -1, -2) @ g
    return g, g_contra, metric


def enrichment_gradient(grad_v, grad_w):
    """Stack Cartesian gradients of ``w_0, w_1, v`` as rows of a ``3x3`` array."""
    grad_v = np.asarray(grad_v, float)
    grad_w = np.asarray(grad_w, float)
    return np.concatenate([grad_w, grad_v[..., None, :]], axis=-2)


def deformation_gradient(grad_u, grad_v, grad_w, G) -> KinState:
    """Deformation gradient from ``grad u`` (Cartesian) and enrichment gradients.

    Parameters
    ----------
    grad_u : (..., 3, 3)
        ``d u_i / d Z_J``.
    grad_v : (..., 3)
        Cartesian gradient of the scalar field ``v``.
    grad_w : (..., 2, 3)
        Cartesian gradients of ``w_0`` and ``w_1``.
    G : (..., 3, 3)
        Reference frame, columns ``G_0, G_1, G_2``.
    """
    MF = I3 + np.asarray(grad_u, float)
    gc = enrichment_gradient(grad_v, grad_w)
    H = I3 + G @ gc
    F = MF @ H
    g, g_contra, metric = convected_basis(MF, G)
    F_local = np.swapaxes(g_contra, -1, -2) @ F @ G
    return KinState(MF, H, F, g, g_contra, metric, F_local)


def _mixed(T, G):
    """Mixed components ``G^A . T G_B`` of a Cartesian tensor."""
    return np.linalg.solve(G, T @ G)


def right_cauchy_green(state: KinState, G=None):
    """Right Cauchy-Green tensor; mixed components ``C^A_B`` when ``G`` is given."""
    F = state.F
    C = np.swapaxes(F, -1, -2) @ F
    return C if G is None else _mixed(C, G)


def green_lagrange(C):
    """``E = (C - I) / 2``; valid for Cartesian or mixed components."""
    return 0.5 * (np.asarray(C, float) - I3)


def svk_stress(E, material: Material):
    """Second Piola-Kirchhoff stress ``lambda tr(E) I + 2 mu E``.

    Holds for Cartesian and for mixed components, where the trace is the
    invariant ``E^A_A``.
    """
    E = np.asarray(E, float)
    tr = np.trace(E, axis1=-2, axis2=-1)
    return material.lame_lambda * tr[..., None, None] * I3 + 2 * material.lame_mu * E


def svk_energy(E, material: Material):
    """Strain energy density ``lambda/2 tr(E)^2 + mu E:E`` (Cartesian ``E``)."""
    tr = np.trace(E, axis1=-2, axis2=-1)
    return 0.5 * material.lame_lambda * tr**2 + material.lame_mu * np.sum(E * E, axis=(-2, -1))


def first_pk(state: KinState, material: Material, G):
    """First Piola-Kirchhoff stress in local and global components.

    Returns ``(P_local, P)`` with ``P = F S`` Cartesian and
    ``P_local[a, A] = g_a . P G^A`` so that ``P = P_local[a, A] g^a (x) G_A``.
    """
    F = state.F
    E = green_lagrange(np.swapaxes(F, -1, -2) @ F)
    P = F @ svk_stress(E, material)
    G_contra = np.swapaxes(np.linalg.inv(G), -1, -2)
    P_local = np.swapaxes(state.g, -1, -2) @ P @ G_contra
    return P_local, P


def local_to_global_pk(P_local, state: KinState, G):
    """Reassemble Cartesian ``P`` from ``P_local`` (``sum P^A_a g^a (x) G_A``)."""
    return state.g_contra @ P_local @ np.swapaxes(G, -1, -2)


def material_tangent(F, S, material: Material):
    """``dP/dF`` of the St. Venant-Kirchhoff law as ``(..., 9, 9)``.

    Row/column index ``3 i + J`` addresses ``F[i, J]``.
    """
    lam, mu = material.lame_lambda, material.lame_mu
    FFt = F @ np.swapaxes(F, -1, -2)
    A = (
        np.einsum("ik,...JL->...iJkL", I3, S)
        + lam * np.einsum("...iJ,...kL->...iJkL", F, F)
        + mu * np.einsum("...ik,JL->...iJkL", FFt, I3)
        + mu * np.einsum("...iL,...kJ->...iJkL", F, F)
    )
    return A.reshape(A.shape[:-4] + (9, 9))
