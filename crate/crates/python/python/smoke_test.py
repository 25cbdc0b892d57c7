"""Smoke test for the tko_py extension. Run after `pip install`."""

import math

import tko_py


def main():
    assert tko_py.kernel_matrix(0, 1) == [[0.0, 0.0, -0.5], [0.0, 1.0, 0.0], [-0.5, 0.0, 0.0]]

    w = 0.2
    assert abs(tko_py.freq_response(0, 1, w) - 2 * math.sin(w) ** 2) < 1e-12

    # chi-square with one degree of freedom
    m = tko_py.Model([0.0], [[1.0]], 1.0)
    k = m.cumulants([[1.0]], 4)
    assert all(abs(a - b) < 1e-12 for a, b in zip(k, [1.0, 2.0, 8.0, 48.0])), k
    cdf = m.cdf([[1.0]], [1.0])[0]
    assert abs(cdf - math.erf(math.sqrt(0.5))) < 1e-6, cdf

    tone = tko_py.Model.tone(0, 1, 17.0)
    j = tko_py.kernel_matrix(0, 1)
    lam, s = tone.decompose(j)
    assert sum(1 for l in lam if l < 0) == 1, lam
    exact = tone.cumulants(j, 2)
    mc, se = tone.sample_cumulants(j, 200_000, 7)
    assert abs(mc[0] - exact[0]) < 5 * se[0]

    x = [math.cos(0.1 * n) for n in range(2048)]
    est = tko_py.esa_demodulate(x)
    om = sorted(v for v in est["omega_sq"] if v is not None)
    assert abs(om[len(om) // 2] / 0.01 - 1) < 1e-3

    grid = [0.01 * i for i in range(1, 16)]
    pdf = tko_py.if_ratio_pdf(0, 1, 17.0, grid)
    assert max(pdf) > 0

    ext = tko_py.two_tone_extrema(0.6, 2.3, 0.0, 0.0, 1.0)
    assert ext and all(neg == (psi <= 0) for _, q, neg, psi in ext if abs(psi) > 1e-9)

    try:
        tko_py.kernel_matrix(3, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("p >= q should be rejected")

    print("tko_py", tko_py.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
