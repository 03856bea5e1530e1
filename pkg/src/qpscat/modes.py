"""Guided-mode (kernel) detection and lifting.

At a propagative wave vector the assembled operator acquires a nontrivial
null space consisting of surface-wave fields: evanescent in depth, with no
propagating Rayleigh orders.  Kernels are extracted from the singular
decomposition of the whitened matrix, so the returned basis is orthonormal
in the weighted inner product, and the adjoint-kernel coincidence can be
checked in the same metric.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ThresholdAmbiguity
from .helmholtz import DiscreteOperator, FieldCoefficients
from .qpcore import IncidenceSpec, ModeIndex, beta, classify_modes

DEFAULT_SVD_THRESHOLD = 1e-8


@dataclass
class KernelBasis:
    """Discrete null-space basis, W-orthonormal, with Rayleigh tail data."""

    vectors: list[np.ndarray]            # fields of shape (n_modes, M)
    singular_values: list[float]         # retained (smallest) singular values
    sigma_max: float
    tail_coeffs: list[dict[ModeIndex, tuple[complex, complex]]]
    space: object
    inc: IncidenceSpec

    @property
    def dimension(self) -> int:
        return len(self.vectors)

    def gram(self) -> np.ndarray:
        d = self.dimension
        g = np.zeros((d, d), dtype=complex)
        for i in range(d):
            for j in range(d):
                g[i, j] = self.space.inner(self.vectors[i], self.vectors[j])
        return g

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """Weighted-inner-product coefficients <u, v_l> of a field."""
        return np.array([self.space.inner(u, v) for v in self.vectors])


def kernel(op: DiscreteOperator, svd_threshold: float = DEFAULT_SVD_THRESHOLD) -> KernelBasis:
    """Extract the numerical null space of the assembled operator.

    Singular vectors of the whitened matrix with sigma < svd_threshold *
    sigma_max span the kernel; an empty basis means the quasi-momentum is
    (numerically) not a propagative wave vector.  Raises ThresholdAmbiguity
    if any singular value lies within a factor 10 of the threshold, in which
    case no reliable kernel/regular split exists at this resolution.
    """
    if op.inc.k.imag != 0:
        raise ValueError("kernel extraction is defined at real k")
    space = op.space
    svals_all = []
    members = []  # (sigma, field)
    if op.block_diagonal:
        wh = op.whitened()
        sigma_max = 0.0
        per_block = []
        for i, B in enumerate(wh):
            U, s, Vh = np.linalg.svd(B)
            per_block.append((i, s, Vh))
            svals_all.extend(s.tolist())
            sigma_max = max(sigma_max, float(s[0]))
        for i, s, Vh in per_block:
            for r in range(len(s)):
                if s[r] < svd_threshold * sigma_max:
                    y = space.zeros()
                    y[i] = np.conj(Vh[r])
                    members.append((float(s[r]), space.unwhiten(y)))
    else:
        Gt = op.whitened()
        U, s, Vh = np.linalg.svd(Gt)
        sigma_max = float(s[0])
        svals_all = s.tolist()
        M = space.M
        for r in range(len(s)):
            if s[r] < svd_threshold * sigma_max:
                y = np.conj(Vh[r]).reshape(len(space.modes), M)
                members.append((float(s[r]), space.unwhiten(y)))
    rel = np.array(sorted(svals_all)) / sigma_max
    ambiguous = [float(t) for t in rel
                 if svd_threshold / 10.0 <= t <= svd_threshold * 10.0]
    if ambiguous:
        raise ThresholdAmbiguity(
            f"singular values {ambiguous} within a factor 10 of the "
            f"threshold {svd_threshold:g}; kernel dimension ill-determined",
            ambiguous=ambiguous)
    members.sort(key=lambda t: t[0])
    vectors = [v for _, v in members]
    sigmas = [sg for sg, _ in members]
    tails = []
    for v in vectors:
        tails.append({n: (complex(v[i, -1]), complex(v[i, 0]))
                      for i, n in enumerate(space.modes)})
    return KernelBasis(vectors=vectors, singular_values=sigmas,
                       sigma_max=sigma_max, tail_coeffs=tails,
                       space=space, inc=op.inc)


@dataclass(frozen=True)
class EvanescenceReport:
    max_propagating_coeff: float
    per_vector: tuple[float, ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_propagating_coeff <= self.tolerance


def verify_evanescent(basis: KernelBasis, inc: IncidenceSpec,
                      tolerance: float = 1e-8) -> EvanescenceReport:
    """Check that kernel vectors carry no propagating Rayleigh orders.

    Reports max |v_n^{+-}| over basis vectors and propagating n, scaled by
    the vector's weighted norm.  An empty basis passes trivially.
    """
    cls = classify_modes(inc, basis.space.disc.N)
    per = []
    for v, tails in zip(basis.vectors, basis.tail_coeffs):
        nrm = basis.space.norm(v)
        worst = 0.0
        for n in cls.propagating:
            tp, tm = tails[n]
            worst = max(worst, abs(tp), abs(tm))
        per.append(worst / nrm if nrm > 0 else 0.0)
    return EvanescenceReport(max_propagating_coeff=max(per) if per else 0.0,
                             per_vector=tuple(per), tolerance=tolerance)


def adjoint_kernel_check(op: DiscreteOperator, basis: KernelBasis) -> float:
    """max over the basis of ||A* v|| / (||A|| ||v||), adjoint in the weighted metric.

    Small values certify that the null spaces of the operator and its adjoint
    coincide numerically (the kernels consist of the same surface waves).
    Returns 0.0 for an empty basis.
    """
    if basis.dimension == 0:
        return 0.0
    space = op.space
    _, sigma_max = op.singularity_report()
    wh = op.whitened()
    worst = 0.0
    for v in basis.vectors:
        y = space.whiten(v)
        if op.block_diagonal:
            ady = np.stack([B.conj().T @ y[i] for i, B in enumerate(wh)])
        else:
            ady = (wh.conj().T @ y.reshape(-1)).reshape(y.shape)
        worst = max(worst, float(np.linalg.norm(ady.ravel())
                                 / (sigma_max * np.linalg.norm(y.ravel()))))
    return worst


@dataclass
class LiftedMode:
    """Quasi-periodic guided mode: interior samples plus evanescent tails.

    phi(x) = e^{i alpha.x~} sum_n v_n(x3) e^{i n.x~} inside the layer and the
    matching evanescent Rayleigh tails outside.
    """

    field: FieldCoefficients
    inc: IncidenceSpec
    tail_plus: dict[ModeIndex, complex]
    tail_minus: dict[ModeIndex, complex]
    _pot: complex = 0.0

    def __call__(self, x) -> complex:
        x = np.asarray(x, dtype=float)
        xt, x3 = x[:2], x[2]
        h = self.inc.h
        al = self.inc.alpha_vec
        if abs(x3) <= h:
            total = 0.0 + 0.0j
            sp = self.field.space
            for i, n in enumerate(sp.modes):
                total += sp.grid.interpolate(self.field.values[i], x3) * \
                    np.exp(1j * (n[0] * xt[0] + n[1] * xt[1]))
            return complex(np.exp(1j * (al @ xt)) * total)
        coeffs = self.tail_plus if x3 > h else self.tail_minus
        z = abs(x3) - h  # e^{+-i beta (x3 -+ h)} = e^{i beta z} on either side
        total = 0.0 + 0.0j
        for n, c in coeffs.items():
            an = np.asarray(n, dtype=float) + al
            b = beta(n, self.inc)
            total += c * np.exp(1j * (an @ xt) + 1j * b * z)
        return complex(total)

    def interior_residual(self) -> float:
        """Collocation residual of Delta phi + k^2 q phi at interior depth nodes.

        Uses the diagnostic differentiation matrix; relative to the field
        scale.  Only meaningful for transversely uniform media (the lift
        stores no medium; caller supplies residual checks for coupled media).
        """
        sp = self.field.space
        g = sp.grid
        k = self.inc.k
        worst = 0.0
        scale = max(np.max(np.abs(self.field.values)), 1e-300)
        for i, n in enumerate(sp.modes):
            prof = self.field.values[i]
            if np.max(np.abs(prof)) < 1e-13 * scale:
                continue
            b = beta(n, self.inc)
            res = g.diff @ (g.diff @ prof) + (b * b + self._pot) * prof
            worst = max(worst, float(np.max(np.abs(res[1:-1])) / scale))
        return worst


def mode_lift(basis: KernelBasis, inc: IncidenceSpec,
              interior_potential: complex | None = None) -> list[LiftedMode]:
    """Lift kernel vectors to quasi-periodic modes with evanescent tails.

    interior_potential, when given, is k^2 (q0 - 1) of a constant layer and
    enables the interior collocation residual diagnostic.
    """
    out = []
    for v, tails in zip(basis.vectors, basis.tail_coeffs):
        fc = FieldCoefficients(space=basis.space, inc=inc, values=v.copy())
        lm = LiftedMode(field=fc, inc=inc,
                        tail_plus={n: t[0] for n, t in tails.items()},
                        tail_minus={n: t[1] for n, t in tails.items()})
        if interior_potential is not None:
            lm._pot = complex(interior_potential)
        out.append(lm)
    return out
