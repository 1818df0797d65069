"""Brute-force lattice scattering reference for tests.

Represents the leads explicitly as long buffers of ideal columns, hard
truncated after `buffer_cols` columns, and closes the system with
mode-matching rows at the two outermost columns: the known incident Bloch
amplitude is prescribed and everything else must be outgoing there.
Evanescent scattering content at the truncation has decayed by
exp(-kappa * buffer_cols), so the device-region solution matches the
semi-infinite problem essentially to solver precision.

Shares no code with dwelldos.lattice beyond the model types.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def buffer_scattering_state(system, energy, lead, mode, buffer_cols=400):
    """Device-site wavefunction for unit incidence in (lead, mode).

    Incident normalization matches the package convention: unit Bloch
    amplitude at the device interface column of the incident lead.
    """
    w, lx = system.width, system.length
    total = 2 * buffer_cols + lx
    n = total * w

    # transverse modes, written out independently
    jj = np.arange(1, w + 1)
    chi = np.zeros((w, w))
    eps = np.zeros(w)
    for m in range(1, w + 1):
        chi[:, m - 1] = np.sqrt(2.0 / (w + 1)) * np.sin(m * np.pi * jj / (w + 1))
        eps[m - 1] = -2.0 * np.cos(m * np.pi / (w + 1))
    ks = np.zeros(w, dtype=complex)
    for m in range(w):
        c = (eps[m] - energy) / 2.0
        if abs(c) < 1.0:
            ks[m] = np.arccos(c)
        elif c >= 1.0:
            ks[m] = 1j * np.arccosh(c)
        else:
            ks[m] = np.pi + 1j * np.arccosh(-c)

    onsite = np.zeros((total, w))
    onsite[buffer_cols:buffer_cols + lx, :] = system.onsite

    def site(col, row):
        return col * w + row

    rows, cols, vals = [], [], []
    rhs = np.zeros(n, dtype=complex)

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    # Schrodinger rows everywhere except the outermost columns
    for c in range(1, total - 1):
        for r in range(w):
            i = site(c, r)
            add(i, i, energy - onsite[c, r])
            add(i, site(c - 1, r), 1.0)
            add(i, site(c + 1, r), 1.0)
            if r > 0:
                add(i, site(c, r - 1), 1.0)
            if r < w - 1:
                add(i, site(c, r + 1), 1.0)

    # interface columns of the two leads (device edge columns)
    iface_left = buffer_cols
    iface_right = buffer_cols + lx - 1

    # left truncation: chi_m . [psi(1) - e^{-ik} psi(0)] = incident term
    for m in range(w):
        i = site(0, m)  # one boundary row per mode
        for r in range(w):
            add(i, site(1, r), chi[r, m])
            add(i, site(0, r), -np.exp(-1j * ks[m]) * chi[r, m])
        if lead == "left" and m == mode - 1:
            rhs[i] = np.exp(-1j * ks[m] * iface_left) * 2j * np.sin(ks[m].real)
    # right truncation: chi_m . [psi(last-1) - e^{-ik} psi(last)] = incident term
    for m in range(w):
        i = site(total - 1, m)
        for r in range(w):
            add(i, site(total - 2, r), chi[r, m])
            add(i, site(total - 1, r), -np.exp(-1j * ks[m]) * chi[r, m])
        if lead == "right" and m == mode - 1:
            dist = (total - 1) - iface_right
            rhs[i] = np.exp(-1j * ks[m] * dist) * 2j * np.sin(ks[m].real)

    mat = sp.csr_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)), shape=(n, n)
    )
    psi = spla.spsolve(mat, rhs)
    device = psi.reshape(total, w)[buffer_cols:buffer_cols + lx, :]
    return device
