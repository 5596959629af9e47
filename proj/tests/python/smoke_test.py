"""Smoke test for the _quantcal extension module."""

import math

import _quantcal as qc


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b}"


def main():
    # Strata and allocation.
    assert qc.stratum_of(0.0) == 1
    assert qc.stratum_of(1.0) == 10
    assert qc.stratum_of(0.55) == 6
    approx(qc.midpoint_sd(5), math.sqrt(0.45 * 0.55))

    pol_w = [0.004, 0.007, 0.017, 0.047, 0.145, 0.165, 0.129, 0.116, 0.119, 0.252]
    plan = qc.neyman_allocate(2000, qc.StrataProfile(pol_w, 1000), floor=50)
    assert plan == [50, 50, 50, 107, 346, 394, 295, 241, 204, 263]

    # Calibrator selection and corrected prevalence.
    nonpol_w = [0.148, 0.117, 0.150, 0.199, 0.242, 0.083, 0.026, 0.013, 0.008, 0.012]
    d_pol = qc.StrataProfile(pol_w, 1000)
    d_nonpol = qc.StrataProfile(nonpol_w, 1000)
    assert abs(qc.jsd(d_pol, d_nonpol) - 0.40) <= 0.01
    choice, diff = qc.select_calibrator(d_pol, d_pol, d_nonpol)
    assert choice == "political" and diff < 0

    forecasts = [0.021, 0.024, 0.023, 0.031, 0.057, 0.189, 0.485, 0.757, 0.869, 0.980]
    p = qc.subreddit_prevalence(d_nonpol, forecasts)
    approx(p, sum(w * f for w, f in zip(nonpol_w, forecasts)), 1e-12)

    # Judgments.
    assert qc.aggregate("c1", [1, 1, 0], "majority") == 1
    assert qc.aggregate("c1", [1, 1, 0], "all_three") == 0
    assert qc.aggregate("c1", [1, 0, 0], "any_one") == 1
    approx(qc.krippendorff_alpha([[1, 1, 1], [0, 0, 0]]), 1.0)

    # TP/TNP.
    tp, tnp = qc.tp_tnp(0.8, 0.6)
    approx(tp, 0.48)
    approx(tnp, 0.32)

    # Text classifier.
    pos = ["senate vote healthcare policy debate congress"] * 20
    neg = ["garlic butter recipe kitchen flavor dinner"] * 20
    model = qc.train_classifier(pos, neg, lam=0.01, min_count=2)
    assert qc.predict_proba(model, pos[0]) > 0.5
    assert qc.predict_proba(model, neg[0]) < 0.5
    assert "senate vote" in qc.ngrams(pos[0])

    # GLMM on a tiny balanced fixture.
    cells = []
    polsub = {}
    for i in range(6):
        name = f"c{i}"
        polsub[name] = i % 2
        for pr in (0, 1):
            for cr in (0, 1):
                cells.append((name, pr, cr, 200.0, 40.0 + 10.0 * pr + 5.0 * cr))
    fit = qc.fit_glmm(cells, polsub)
    assert fit.converged
    means = qc.predict_cell_means(fit)
    assert len(means) == 8 and all(0.0 < m < 1.0 for m in means)

    # Partisan leaning.
    assert qc.classify_leaning(5, 1, 3.0, 1.5) == "left"
    assert qc.classify_leaning(1, 5, 1.5, 3.0) == "right"
    assert qc.classify_leaning(0, 0) == "unknown"

    print("python smoke test passed")


if __name__ == "__main__":
    main()
