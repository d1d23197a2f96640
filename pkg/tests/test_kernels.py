"""Both kernel backends against naive single-loop oracles, and each other.

Every test runs per backend; the cross-backend tests additionally pin the
pair to identical outputs (assignments exact, floats bit-for-bit where the
two share an operation tree).
"""

import numpy as np
import pytest

from kng.kernels import BACKEND, backends

IMPLS = backends()
BOTH = sorted(IMPLS)
pytestmark = pytest.mark.parametrize(
    "impl", [IMPLS[n] for n in BOTH], ids=BOTH)


def rng(seed=0):
    return np.random.default_rng(seed)


def naive_nearest_two(x, centers):
    s1 = []
    s2 = []
    d1 = []
    d2 = []
    for row in x:
        dist = [float(np.dot(row - c, row - c)) for c in centers]
        b1 = b2 = -1
        v1 = v2 = np.inf
        for j, v in enumerate(dist):
            if v < v1:
                b2, v2 = b1, v1
                b1, v1 = j, v
            elif v < v2:
                b2, v2 = j, v
        s1.append(b1)
        s2.append(b2)
        d1.append(np.sqrt(v1))
        d2.append(np.sqrt(v2))
    return np.array(s1), np.array(s2), np.array(d1), np.array(d2)


class TestNearestTwo:
    def test_against_naive(self, impl):
        r = rng(1)
        x = r.normal(size=(40, 7))
        c = r.normal(size=(9, 7))
        s1, s2, d1, d2 = impl.nearest_two(x, c)
        n1, n2, e1, e2 = naive_nearest_two(x, c)
        np.testing.assert_array_equal(s1, n1)
        np.testing.assert_array_equal(s2, n2)
        np.testing.assert_allclose(d1, e1, atol=1e-9)
        np.testing.assert_allclose(d2, e2, atol=1e-9)
        assert np.all(d1 <= d2)
        assert np.all(s1 != s2)

    def test_duplicate_centers_tie_to_lowest_index(self, impl):
        # centers 1 and 3 are identical; both nearest slots must prefer
        # the lower index on exact ties
        c = np.array([[10.0], [0.0], [5.0], [0.0]])
        x = np.array([[0.0], [0.1]])
        s1, s2, d1, d2 = impl.nearest_two(x, c)
        np.testing.assert_array_equal(s1, [1, 1])
        np.testing.assert_array_equal(s2, [3, 3])
        np.testing.assert_allclose(d1, d2)

    def test_point_on_center(self, impl):
        c = np.array([[0.0, 0.0], [3.0, 4.0]])
        s1, s2, d1, d2 = impl.nearest_two(np.array([[3.0, 4.0]]), c)
        assert s1[0] == 1 and s2[0] == 0
        assert d1[0] == 0.0
        np.testing.assert_allclose(d2[0], 5.0)

    def test_requires_two_centers(self, impl):
        with pytest.raises(ValueError):
            impl.nearest_two(np.zeros((3, 2)), np.zeros((1, 2)))

    def test_dim_mismatch(self, impl):
        with pytest.raises(ValueError):
            impl.nearest_two(np.zeros((3, 2)), np.zeros((4, 3)))

    def test_chunk_boundaries(self, impl):
        # n chosen to straddle the numpy backend's block size when k is big
        r = rng(2)
        k = 1 << 12
        c = r.normal(size=(k, 3))
        x = r.normal(size=(2100, 3))
        s1, s2, d1, d2 = impl.nearest_two(x, c)
        # spot-check a scattering of rows against the naive rule
        for i in (0, 1023, 1024, 1025, 2099):
            n1, n2, e1, e2 = naive_nearest_two(x[i:i + 1], c)
            assert s1[i] == n1[0] and s2[i] == n2[0]
            np.testing.assert_allclose([d1[i], d2[i]], [e1[0], e2[0]], atol=1e-9)


class TestQuadForm:
    def test_against_naive(self, impl):
        r = rng(3)
        diffs = r.normal(size=(20, 6))
        a = r.normal(size=(6, 6))
        p = a @ a.T + 6 * np.eye(6)
        got = impl.quad_form(diffs, p)
        want = np.array([d @ p @ d for d in diffs])
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_identity_is_squared_norm(self, impl):
        r = rng(4)
        diffs = r.normal(size=(10, 5))
        got = impl.quad_form(diffs, np.eye(5))
        np.testing.assert_allclose(got, (diffs ** 2).sum(axis=1), rtol=1e-12)

    def test_positive_for_spd(self, impl):
        r = rng(5)
        a = r.normal(size=(4, 4))
        p = a @ a.T + 4 * np.eye(4)
        got = impl.quad_form(r.normal(size=(50, 4)), p)
        assert np.all(got > 0)


def naive_blur(m, kernel):
    # dense 2-d correlation with explicit half-sample symmetric padding
    r = len(kernel) // 2
    if r == 0:
        return m * kernel[0]

    def reflect(i, n):
        # ...3 2 1 0 | 0 1 2 3 ... n-1 | n-1 n-2...
        while i < 0 or i >= n:
            if i < 0:
                i = -i - 1
            else:
                i = 2 * n - 1 - i
        return i

    h, w = m.shape
    out = np.zeros_like(m, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    acc += (kernel[di + r] * kernel[dj + r]
                            * m[reflect(i + di, h), reflect(j + dj, w)])
            out[i, j] = acc
    return out


class TestGaussianBlur:
    def kernel(self, sigma, radius):
        x = np.arange(-radius, radius + 1, dtype=np.float64)
        k = np.exp(-0.5 * (x / sigma) ** 2)
        return k / k.sum()

    def test_against_dense_naive(self, impl):
        m = rng(6).normal(size=(9, 11))
        k = self.kernel(1.5, 4)
        np.testing.assert_allclose(impl.gaussian_blur_2d(m, k),
                                   naive_blur(m, k), atol=1e-12)

    def test_impulse_response(self, impl):
        m = np.zeros((15, 15))
        m[7, 7] = 1.0
        k = self.kernel(1.0, 3)
        out = impl.gaussian_blur_2d(m, k)
        np.testing.assert_allclose(out[4:11, 4:11], np.outer(k, k), atol=1e-14)

    def test_preserves_mass_of_constant(self, impl):
        # normalized kernel + symmetric padding keeps constants constant
        m = np.full((6, 8), 3.25)
        out = impl.gaussian_blur_2d(m, self.kernel(2.0, 5))
        np.testing.assert_allclose(out, 3.25, rtol=1e-12)

    def test_radius_larger_than_image(self, impl):
        m = rng(7).normal(size=(3, 2))
        k = self.kernel(3.0, 7)  # radius 7 >> both axes
        np.testing.assert_allclose(impl.gaussian_blur_2d(m, k),
                                   naive_blur(m, k), atol=1e-12)

    def test_size_one_kernel(self, impl):
        m = rng(8).normal(size=(4, 4))
        np.testing.assert_array_equal(impl.gaussian_blur_2d(m, np.array([1.0])), m)

    def test_even_kernel_rejected(self, impl):
        with pytest.raises(ValueError):
            impl.gaussian_blur_2d(np.zeros((3, 3)), np.ones(4) / 4)


def naive_bilinear(m, out_h, out_w):
    h, w = m.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            sy = i * (h - 1) / (out_h - 1) if out_h > 1 and h > 1 else 0.0
            sx = j * (w - 1) / (out_w - 1) if out_w > 1 and w > 1 else 0.0
            y0, x0 = int(sy), int(sx)
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            top = m[y0, x0] + (m[y0, x1] - m[y0, x0]) * fx
            bot = m[y1, x0] + (m[y1, x1] - m[y1, x0]) * fx
            out[i, j] = top + (bot - top) * fy
    return out


class TestBilinearResize:
    @pytest.mark.parametrize("shape,out", [
        ((4, 5), (16, 20)),   # upsample
        ((9, 9), (4, 6)),     # downsample
        ((3, 3), (3, 3)),     # identity size
        ((1, 5), (4, 10)),    # degenerate input axis
        ((5, 1), (10, 4)),
        ((4, 4), (1, 1)),     # collapse to a point
    ])
    def test_against_naive(self, impl, shape, out):
        m = rng(9).normal(size=shape)
        got = impl.bilinear_resize(m, *out)
        assert got.shape == out
        np.testing.assert_allclose(got, naive_bilinear(m, *out), atol=1e-12)

    def test_identity_when_same_size(self, impl):
        m = rng(10).normal(size=(6, 7))
        np.testing.assert_array_equal(impl.bilinear_resize(m, 6, 7), m)

    def test_corners_align(self, impl):
        m = rng(11).normal(size=(5, 5))
        out = impl.bilinear_resize(m, 31, 17)
        np.testing.assert_allclose(
            [out[0, 0], out[0, -1], out[-1, 0], out[-1, -1]],
            [m[0, 0], m[0, -1], m[-1, 0], m[-1, -1]], rtol=1e-12)

    def test_linear_ramp_exact(self, impl):
        # bilinear reproduces affine maps exactly
        y, x = np.mgrid[0:6, 0:8].astype(np.float64)
        m = 2.0 * y + 3.0 * x + 1.0
        out = impl.bilinear_resize(m, 11, 23)
        yy, xx = np.mgrid[0:11, 0:23].astype(np.float64)
        want = 2.0 * (yy * 5 / 10) + 3.0 * (xx * 7 / 22) + 1.0
        np.testing.assert_allclose(out, want, rtol=1e-12)

    def test_rejects_bad_output_dims(self, impl):
        with pytest.raises(ValueError):
            impl.bilinear_resize(np.zeros((3, 3)), 0, 4)


@pytest.mark.skipif(len(IMPLS) < 2, reason="compiled backend not built")
class TestBackendAgreement:
    def test_nearest_two_identical(self, impl):
        r = rng(12)
        x = r.normal(size=(300, 16))
        c = r.normal(size=(25, 16))
        outs = [IMPLS[name].nearest_two(x, c) for name in BOTH]
        np.testing.assert_array_equal(outs[0][0], outs[1][0])
        np.testing.assert_array_equal(outs[0][1], outs[1][1])
        np.testing.assert_allclose(outs[0][2], outs[1][2], rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(outs[0][3], outs[1][3], rtol=1e-12, atol=1e-12)

    def test_bilinear_bit_identical(self, impl):
        m = rng(13).normal(size=(14, 14))
        a = IMPLS[BOTH[0]].bilinear_resize(m, 56, 56)
        b = IMPLS[BOTH[1]].bilinear_resize(m, 56, 56)
        np.testing.assert_array_equal(a, b)

    def test_blur_agreement(self, impl):
        m = rng(14).normal(size=(56, 56))
        x = np.arange(-8, 9, dtype=np.float64)
        k = np.exp(-0.5 * (x / 2.0) ** 2)
        k /= k.sum()
        a = IMPLS[BOTH[0]].gaussian_blur_2d(m, k)
        b = IMPLS[BOTH[1]].gaussian_blur_2d(m, k)
        np.testing.assert_allclose(a, b, atol=1e-13)

    def test_quad_form_agreement(self, impl):
        r = rng(15)
        diffs = r.normal(size=(100, 32))
        a = r.normal(size=(32, 32))
        p = a @ a.T + 32 * np.eye(32)
        x = IMPLS[BOTH[0]].quad_form(diffs, p)
        y = IMPLS[BOTH[1]].quad_form(diffs, p)
        np.testing.assert_allclose(x, y, rtol=1e-12)


def test_active_backend_exposed(impl):
    assert BACKEND in IMPLS
    for name in ("nearest_two", "quad_form", "gaussian_blur_2d", "bilinear_resize"):
        assert callable(getattr(impl, name))
