"""Separation metrics and estimate-to-reference alignment."""
import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import ShapeError

SI_SDR_CAP = 60.0


def si_sdr(estimate, reference, cap=SI_SDR_CAP):
    """Scale-invariant SDR in dB, capped at ``cap``.

    ``10 log10(||a s||^2 / ||a s - s_hat||^2)`` with ``a = <s_hat, s> / ||s||^2``.
    """
    est = np.asarray(estimate, dtype=np.float64).ravel()
    ref = np.asarray(reference, dtype=np.float64).ravel()
    if est.shape != ref.shape:
        raise ShapeError(f"estimate has {est.size} samples, reference {ref.size}")
    ref_energy = np.dot(ref, ref)
    if ref_energy == 0:
        raise ValueError("reference signal is all zeros")
    target = (np.dot(est, ref) / ref_energy) * ref
    err = np.dot(target - est, target - est)
    sig = np.dot(target, target)
    if err <= sig * 10 ** (-cap / 10):
        return float(cap)
    if sig == 0:
        return float(-cap)
    return float(min(cap, 10 * np.log10(sig / err)))


def select_loudest(estimates, k):
    """Indices of the ``k`` highest-power estimates, in their original order."""
    power = np.array([np.mean(np.abs(np.asarray(e)) ** 2) for e in estimates])
    if k > len(power):
        raise ValueError(f"cannot select {k} of {len(power)} estimates")
    top = np.argsort(-power, kind="stable")[:k]
    return np.sort(top)


def permute_align(estimates, references, metric=si_sdr):
    """Assign one estimate to every reference, maximising the summed metric.

    Returns
    -------
    perm : ndarray of int
        ``perm[j]`` is the index of the estimate assigned to reference ``j``.
    scores : ndarray
        Metric of each assigned pair.
    """
    n_est, n_ref = len(estimates), len(references)
    if n_est < n_ref:
        raise ValueError(f"{n_est} estimates cannot cover {n_ref} references")
    score = np.array([[metric(e, r) for e in estimates] for r in references])
    return _assign(score)


def _assign(score):
    # deterministic for a given score matrix, so ties always resolve the same way
    rows, cols = linear_sum_assignment(score, maximize=True)
    perm = cols[np.argsort(rows)]
    return perm, score[np.arange(score.shape[0]), perm]
