import numpy as np
from scipy.stats import chi2


def brute_force_closure_rejections(p, alpha, test="simes"):
    """Closed testing by full enumeration of the 2^m - 1 subsets.

    Exponential-cost oracle for small m: a hypothesis is rejected when every
    subset containing it passes its local test at level alpha.
    """
    p = np.asarray(p, dtype=float)
    m = p.size
    masks = np.arange(1, 2 ** m)
    member = (masks[:, None] >> np.arange(m)) & 1  # (n_subsets, m)
    sizes = member.sum(axis=1)
    vals = np.where(member.astype(bool), p[None, :], np.nan)
    if test == "simes":
        svals = np.sort(vals, axis=1)  # NaN sorts last
        ranks = np.arange(1, m + 1)[None, :]
        with np.errstate(invalid="ignore"):
            stats = np.nanmin(sizes[:, None] * svals / ranks, axis=1)
        passes = stats <= alpha
    elif test == "fisher":
        with np.errstate(invalid="ignore", divide="ignore"):
            stats = -2.0 * np.nansum(np.log(vals), axis=1)
        passes = stats >= chi2.isf(alpha, df=2 * sizes) - 1e-9
    else:
        raise ValueError(test)
    rejected = set()
    for i in range(m):
        containing = member[:, i].astype(bool)
        if passes[containing].all():
            rejected.add(i)
    return rejected
