"""Reference computations that share no code path with the solvers under test."""
import numpy as np
import scipy.linalg as sla


def dense_principal(matrix, cell_volume):
    """Smallest-real-part eigenpair of a dense copy, u > 0 with unit L2 norm."""
    M = matrix.toarray() if hasattr(matrix, "toarray") else np.asarray(matrix)
    w, V = sla.eig(M)
    k = int(np.argmin(w.real))
    v = V[:, k].real
    v = v * np.sign(v.sum())
    v /= np.sqrt(np.sum(v * v) * cell_volume)
    return float(w[k].real), v, np.sort(w.real)


def fourier_schrodinger(eps, a_hat, n_modes=256):
    """Lowest eigenvalue of ``-eps u'' + a u`` on the circle in a Fourier basis.

    ``a_hat`` maps integer frequency -> Fourier coefficient of ``a``.
    """
    k = np.arange(-n_modes, n_modes + 1)
    H = np.diag(eps * k.astype(float) ** 2)
    for m, coef in a_hat.items():
        H += coef * np.eye(len(k), k=-m)
    return float(np.min(sla.eigvalsh(H)))


def fd_laplacian_1d(n, period):
    """Positive periodic 3-point Laplacian, written out by hand."""
    h = period / n
    L = np.zeros((n, n))
    for i in range(n):
        L[i, i] = 2.0 / h ** 2
        L[i, (i + 1) % n] = -1.0 / h ** 2
        L[i, (i - 1) % n] = -1.0 / h ** 2
    return L


def characteristic_value_1d(b, c, f, x0, t_max=40.0, dt=1e-3):
    """Trapezoid-in-time ``int_0^T f(X_t) exp(-int_0^t c) dt`` with X' = b(X) by RK4."""
    x = x0
    acc, phase, t = 0.0, 0.0, 0.0
    g_prev = f(x)
    while t < t_max:
        k1 = b(x)
        k2 = b(x + 0.5 * dt * k1)
        k3 = b(x + 0.5 * dt * k2)
        k4 = b(x + dt * k3)
        x_new = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        phase_new = phase + 0.5 * dt * (c(x) + c(x_new))
        g_new = f(x_new) * np.exp(-phase_new)
        acc += 0.5 * dt * (g_prev + g_new)
        g_prev, x, phase, t = g_new, x_new, phase_new, t + dt
    return acc
