"""Compiled propagation kernels.

The Dormand-Prince 5(4) stepper is generic over a right-hand side
``rhs(t, y, params, out)`` acting on a flat complex state vector. Three
right-hand sides are provided:

* ``rhs_schrodinger``: ``dpsi/dt = -i H(t) psi`` in the bare basis.
* ``rhs_lindblad_lab``: Davies generator in the bare basis, with a numerical
  eigendecomposition of ``H(t)`` at every call.
* ``rhs_lindblad_rotating``: the same generator written in the rotating
  adiabatic frame of the Morris-Shore pairs, where the eigensystem is known in
  closed form and the state varies slowly.
"""

import math

import numpy as np
from numba import njit

# Dormand-Prince 5(4) tableau.
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

# PI controller constants (Hairer & Wanner, DOPRI5).
BETA = 0.04
EXPO1 = 0.2 - 0.75 * BETA
SAFE = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAX_STEPS = 2


@njit(cache=True, nogil=True)
def _hermitize(y, n):
    """Symmetrize a flattened n x n matrix in place; return the max deviation."""
    dev = 0.0
    for i in range(n):
        for j in range(i, n):
            a = y[i * n + j]
            b = y[j * n + i]
            d = abs(a - b.conjugate())
            if d > dev:
                dev = d
            m = 0.5 * (a + b.conjugate())
            y[i * n + j] = m
            y[j * n + i] = m.conjugate()
    return dev


@njit(cache=True, nogil=True)
def dopri5(rhs, params, y0, t_samples, rtol, atol, h0, hmax, hermitian_dim, max_steps):
    """Integrate from ``t_samples[0]`` through every sample time.

    Steps are clipped to land exactly on sample times. When ``hermitian_dim``
    is positive the state is treated as a flattened Hermitian matrix and
    symmetrized after each accepted step.

    Returns ``(samples, status, t_fail, n_accepted, n_rejected, max_herm_dev)``.
    """
    n = y0.size
    ns = t_samples.size
    out = np.empty((ns, n), dtype=np.complex128)
    y = y0.copy()
    out[0, :] = y
    t = t_samples[0]

    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    k5 = np.empty(n, dtype=np.complex128)
    k6 = np.empty(n, dtype=np.complex128)
    k7 = np.empty(n, dtype=np.complex128)
    ytmp = np.empty(n, dtype=np.complex128)
    ynew = np.empty(n, dtype=np.complex128)

    rhs(t, y, params, k1)
    h = min(h0, hmax)
    facold = 1e-4
    n_acc = 0
    n_rej = 0
    herm_dev = 0.0
    status = STATUS_OK
    t_fail = t
    total = 0

    for s in range(1, ns):
        t_target = t_samples[s]
        while t < t_target:
            total += 1
            if total > max_steps:
                return out, STATUS_MAX_STEPS, t, n_acc, n_rej, herm_dev
            last = False
            hs = h
            # absorb remainders too small to step over separately
            if t + 1.01 * hs >= t_target:
                hs = t_target - t
                last = True
            if hs < 1e-14 * max(1.0, abs(t)):
                return out, STATUS_UNDERFLOW, t, n_acc, n_rej, herm_dev

            for i in range(n):
                ytmp[i] = y[i] + hs * A21 * k1[i]
            rhs(t + C2 * hs, ytmp, params, k2)
            for i in range(n):
                ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
            rhs(t + C3 * hs, ytmp, params, k3)
            for i in range(n):
                ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            rhs(t + C4 * hs, ytmp, params, k4)
            for i in range(n):
                ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            rhs(t + C5 * hs, ytmp, params, k5)
            for i in range(n):
                ytmp[i] = y[i] + hs * (
                    A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]
                )
            rhs(t + hs, ytmp, params, k6)
            for i in range(n):
                ynew[i] = y[i] + hs * (
                    A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]
                )
            rhs(t + hs, ynew, params, k7)

            err = 0.0
            for i in range(n):
                e = hs * (
                    E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]
                )
                sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
                r = abs(e) / sc
                err += r * r
            err = math.sqrt(err / n)

            fac11 = err**EXPO1 if err > 0.0 else 0.0
            if err <= 1.0:
                fac = fac11 / facold**BETA
                fac = max(1.0 / FAC_MAX, min(1.0 / FAC_MIN, fac / SAFE))
                facold = max(err, 1e-4)
                t = t_target if last else t + hs
                for i in range(n):
                    y[i] = ynew[i]
                if hermitian_dim > 0:
                    d = _hermitize(y, hermitian_dim)
                    if d > herm_dev:
                        herm_dev = d
                    rhs(t, y, params, k1)
                else:
                    for i in range(n):
                        k1[i] = k7[i]
                n_acc += 1
                hn = hs / fac
                if not last or hn < h:
                    h = min(hn, hmax)
            else:
                n_rej += 1
                h = hs / min(1.0 / FAC_MIN, fac11 / SAFE)
                if h < 1e-14 * max(1.0, abs(t)):
                    return out, STATUS_UNDERFLOW, t, n_acc, n_rej, herm_dev
        out[s, :] = y
    return out, status, t_fail, n_acc, n_rej, herm_dev


# ---------------------------------------------------------------------------
# shared physics helpers


@njit(cache=True, nogil=True)
def thermal_factor(omega, temperature):
    if temperature <= 0.0:
        return 1.0 if omega > 0.0 else 0.0
    x = omega / temperature
    # sign(w) / (1 - exp(-w/T)), written to stay finite for large |x|
    if x > 0.0:
        return 1.0 / (-math.expm1(-x))
    return 1.0 / math.expm1(-x)


@njit(cache=True, nogil=True)
def _cluster(energies, tol, order, starts):
    """Group eigenvalues whose sorted gaps are <= tol.

    Fills ``order`` (indices sorted by energy) and ``starts`` (cluster c spans
    ``order[starts[c]:starts[c + 1]]``); returns the number of clusters.
    """
    n = energies.size
    srt = np.argsort(energies)
    for k in range(n):
        order[k] = srt[k]
    starts[0] = 0
    c = 0
    for k in range(1, n):
        if energies[order[k]] - energies[order[k - 1]] > tol:
            c += 1
            starts[c] = k
    starts[c + 1] = n
    return c + 1


@njit(cache=True, nogil=True)
def _add_dissipator(xb, energies, order, starts, nc, gamma, temperature, rho, out, kmat):
    """out += sum_{a != b} rate_ab D(P_a xb P_b, rho) for clustered projectors P."""
    n = rho.shape[0]
    if gamma == 0.0:
        return
    for i in range(n):
        for j in range(n):
            kmat[i, j] = 0.0
    for a in range(nc):
        a0, a1 = starts[a], starts[a + 1]
        ea = 0.0
        for p in range(a0, a1):
            ea += energies[order[p]]
        ea /= a1 - a0
        for b in range(nc):
            if a == b:
                continue
            b0, b1 = starts[b], starts[b + 1]
            eb = 0.0
            for q in range(b0, b1):
                eb += energies[order[q]]
            eb /= b1 - b0
            rate = gamma * thermal_factor(eb - ea, temperature)
            if rate == 0.0:
                continue
            norm = 0.0
            for p in range(a0, a1):
                for q in range(b0, b1):
                    norm += abs(xb[order[p], order[q]]) ** 2
            if norm <= 1e-28:
                continue
            # L rho L^dag lands in block (a, a); L^dag L in block (b, b)
            for p in range(a0, a1):
                m = order[p]
                for p2 in range(a0, a1):
                    m2 = order[p2]
                    acc = 0.0j
                    for q in range(b0, b1):
                        k = order[q]
                        row = 0.0j
                        for q2 in range(b0, b1):
                            k2 = order[q2]
                            row += rho[k, k2] * xb[m2, k2].conjugate()
                        acc += xb[m, k] * row
                    out[m, m2] += rate * acc
            for q in range(b0, b1):
                k = order[q]
                for q2 in range(b0, b1):
                    k2 = order[q2]
                    acc = 0.0j
                    for p in range(a0, a1):
                        m = order[p]
                        acc += xb[m, k].conjugate() * xb[m, k2]
                    kmat[k, k2] += rate * acc
    for i in range(n):
        for j in range(n):
            acc = 0.0j
            for k in range(n):
                acc += kmat[i, k] * rho[k, j] + rho[i, k] * kmat[k, j]
            out[i, j] -= 0.5 * acc


# ---------------------------------------------------------------------------
# bare-basis right-hand sides


@njit(cache=True, nogil=True)
def _hamiltonian(t, kappa, m_upper, coupling):
    h = coupling.copy()
    eps = kappa * t
    for i in range(m_upper):
        h[i, i] += eps
    return h


@njit(cache=True, nogil=True)
def rhs_schrodinger(t, y, params, out):
    kappa, m_upper, coupling = params
    h = _hamiltonian(t, kappa, m_upper, coupling)
    n = y.size
    for i in range(n):
        acc = 0.0j
        for j in range(n):
            acc += h[i, j] * y[j]
        out[i] = -1.0j * acc


@njit(cache=True, nogil=True)
def rhs_lindblad_lab(t, y, params, out):
    kappa, m_upper, coupling, xop, gamma, temperature, rel_tol = params
    n = coupling.shape[0]
    h = _hamiltonian(t, kappa, m_upper, coupling)
    rho = y.reshape((n, n))
    d = -1.0j * (h @ rho - rho @ h)
    if gamma != 0.0:
        w, v = np.linalg.eigh(h)
        tol = rel_tol * max(1.0, w[-1] - w[0])
        order = np.empty(n, dtype=np.int64)
        starts = np.empty(n + 1, dtype=np.int64)
        nc = _cluster(w, tol, order, starts)
        # jump operators in the eigenbasis, mapped back afterwards
        xe = v.conj().T @ xop @ v
        rho_e = v.conj().T @ rho @ v
        de = np.zeros((n, n), dtype=np.complex128)
        kmat = np.empty((n, n), dtype=np.complex128)
        _add_dissipator(xe, w, order, starts, nc, gamma, temperature, rho_e, de, kmat)
        d += v @ de @ v.conj().T
    flat = d.reshape(n * n)
    for i in range(n * n):
        out[i] = flat[i]


# ---------------------------------------------------------------------------
# rotating adiabatic frame
#
# Basis ordering: pair k occupies indices 2k ("+", upper adiabatic branch)
# and 2k+1 ("-"); then upper dark states, then lower dark states. The frame
# is fixed by a constant unitary Q (Morris-Shore basis of the coupling block)
# and the analytic pair mixing angles theta_k(t) = atan2(2 s_k, kappa t) / 2.


@njit(cache=True, nogil=True)
def _pair_antiderivative(t, a, s):
    """Integral of sqrt(a^2 t^2 + s^2) from 0 to t."""
    r = math.sqrt(a * a * t * t + s * s)
    return 0.5 * t * r + (s * s / (2.0 * a)) * math.asinh(a * t / s)


@njit(cache=True, nogil=True)
def fill_frame(t, kappa, svals, n_up_dark, energies, phases, thetas, tdots):
    """Write energies, phases, mixing angles and their rates at time t."""
    r = svals.size
    n = energies.size
    eps = kappa * t
    quarter = 0.25 * kappa * t * t
    a = 0.5 * kappa
    for k in range(r):
        s = svals[k]
        rr = math.sqrt(0.25 * eps * eps + s * s)
        energies[2 * k] = 0.5 * eps + rr
        energies[2 * k + 1] = 0.5 * eps - rr
        f = _pair_antiderivative(t, a, s)
        phases[2 * k] = quarter + f
        phases[2 * k + 1] = quarter - f
        thetas[k] = 0.5 * math.atan2(2.0 * s, eps)
        tdots[k] = -s * kappa / (eps * eps + 4.0 * s * s)
    for i in range(2 * r, n):
        if i < 2 * r + n_up_dark:
            energies[i] = eps
            phases[i] = 2.0 * quarter
        else:
            energies[i] = 0.0
            phases[i] = 0.0


@njit(cache=True, nogil=True)
def frame_data(t, kappa, svals, n_up_dark, n_low_dark):
    """Return (energies, phases, thetas, theta_dots) of the adiabatic frame."""
    r = svals.size
    n = 2 * r + n_up_dark + n_low_dark
    energies = np.empty(n)
    phases = np.empty(n)
    thetas = np.empty(r)
    tdots = np.empty(r)
    fill_frame(t, kappa, svals, n_up_dark, energies, phases, thetas, tdots)
    return energies, phases, thetas, tdots


@njit(cache=True, nogil=True)
def pair_rotation(thetas, n):
    """Orthogonal B(t): columns are adiabatic states in the Q basis."""
    b = np.eye(n)
    for k in range(thetas.size):
        c = math.cos(thetas[k])
        s = math.sin(thetas[k])
        i = 2 * k
        b[i, i] = c
        b[i + 1, i] = s
        b[i, i + 1] = -s
        b[i + 1, i + 1] = c
    return b


def rotating_workspace(n, r):
    """Scratch arrays owned by one evolution."""
    return (
        np.empty(n),
        np.empty(n),
        np.empty(max(r, 1)),
        np.empty(max(r, 1)),
        np.empty(n, dtype=np.int64),
        np.empty(n + 1, dtype=np.int64),
        np.empty((3, n, n), dtype=np.complex128),
        np.empty(n, dtype=np.complex128),
    )


@njit(cache=True, nogil=True)
def rhs_lindblad_rotating(t, y, params, out):
    kappa, svals, n_up_dark, xq, gamma, temperature, rel_tol, ws = params
    energies, phases, thetas_buf, tdots_buf, order, starts, cbuf, ph = ws
    n = xq.shape[0]
    r = svals.size
    thetas = thetas_buf[:r]
    tdots = tdots_buf[:r]
    rho = y.reshape((n, n))
    d = out.reshape((n, n))
    fill_frame(t, kappa, svals, n_up_dark, energies, phases, thetas, tdots)
    for i in range(n):
        for j in range(n):
            d[i, j] = 0.0

    # -[A_b, rho] with A_b nonzero only inside each pair
    for k in range(r):
        p = 2 * k
        m = p + 1
        w = tdots[k] * np.exp(1.0j * (phases[m] - phases[p]))
        wc = w.conjugate()
        # A[m, p] = w, A[p, m] = -conj(w)
        for j in range(n):
            d[m, j] -= w * rho[p, j]
            d[p, j] += wc * rho[m, j]
            d[j, p] += rho[j, m] * w
            d[j, m] -= rho[j, p] * wc

    if gamma == 0.0:
        return
    xb = cbuf[0]
    kmat = cbuf[1]
    for i in range(n):
        ph[i] = np.exp(1.0j * phases[i])
    # X in the adiabatic basis: rotate rows and columns of each pair
    for i in range(n):
        for j in range(n):
            xb[i, j] = xq[i, j]
    for k in range(r):
        c = math.cos(thetas[k])
        s = math.sin(thetas[k])
        p = 2 * k
        m = p + 1
        for j in range(n):
            u = xb[p, j]
            v = xb[m, j]
            xb[p, j] = c * u + s * v
            xb[m, j] = -s * u + c * v
        for i in range(n):
            u = xb[i, p]
            v = xb[i, m]
            xb[i, p] = c * u + s * v
            xb[i, m] = -s * u + c * v
    for i in range(n):
        for j in range(n):
            xb[i, j] *= ph[i] * ph[j].conjugate()
    emin = energies[0]
    emax = energies[0]
    for i in range(1, n):
        emin = min(emin, energies[i])
        emax = max(emax, energies[i])
    tol = rel_tol * max(1.0, emax - emin)
    nc = _cluster(energies, tol, order, starts)
    _add_dissipator(xb, energies, order, starts, nc, gamma, temperature, rho, d, kmat)
