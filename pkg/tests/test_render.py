import math

import numpy as np
import pytest

from conftest import build_scene, full_map, gaussian_bump, hemisphere_field, simple_layer
from mock3d import IntegralParams, NormalParams, RayFan, ShapeMap, normal_from_field
from mock3d._rays import directional_fan, point_fan
from mock3d.scene import Light, Settings
from mock3d.render import (
    ambient_occlusion,
    ao_sample_distances,
    composite,
    fresnel_weight,
    horizon_shadow,
    reflect_directions,
    reflection_pass,
    refract_directions,
    refraction_pass,
    render_scene,
    sample_environment,
    shade_diffuse_specular,
    shadow_mask,
)

DOWN = Light("directional", direction=(0.0, 0.0, -1.0))


def flat_scene(size=24, **kw):
    z = np.zeros((size, size))
    m = ShapeMap.from_channels(z, z, z, np.ones_like(z))
    return build_scene([simple_layer("a", m)], [DOWN], **kw)


# ---------------------------------------------------------------------------
# diffuse / specular

class TestShading:
    def test_flat_field_straight_down_light(self):
        scene = flat_scene()
        rgb = shade_diffuse_specular(scene, scene.layers[0], DOWN)
        assert np.allclose(rgb, 1.0)

    def test_in_plane_light_is_dark(self):
        scene = flat_scene()
        side = Light("directional", direction=(1.0, 0.0, 0.0))
        rgb = shade_diffuse_specular(scene, scene.layers[0], side)
        assert np.allclose(rgb, 0.0)

    def test_hemisphere_matches_per_pixel_oracle(self):
        n0, n1, inside = hemisphere_field(48, 20.0)
        m = ShapeMap.from_channels(n0, n1, np.zeros_like(n0), inside * 1.0)
        params = NormalParams(s=1 / math.sqrt(2))
        layer = simple_layer("h", m, normal_params=params)
        d = np.array([-1.0, 0.0, -1.0]) / math.sqrt(2)
        light = Light("directional", direction=tuple(d))
        scene = build_scene([layer], [light])
        rgb = shade_diffuse_specular(scene, layer, light)
        normals = normal_from_field(m.n0, m.n1, params)
        lam = np.maximum((normals * (-d)).sum(axis=-1), 0.0)
        valid = m.alpha > 0.5
        assert np.abs(rgb[valid][:, 0] - lam[valid]).max() < 1e-6
        # light travels toward -x, so it comes from +x: brightest at that rim
        ys, xs = np.where(rgb[..., 0] >= rgb[..., 0].max() - 1e-9)
        assert xs.mean() > 28

    def test_specular_highlight(self):
        n0, n1, inside = hemisphere_field(48, 20.0)
        m = ShapeMap.from_channels(n0, n1, np.zeros_like(n0), inside * 1.0)
        layer = simple_layer("h", m, specular=1.0)
        scene = build_scene([layer], [DOWN])
        rgb = shade_diffuse_specular(scene, layer, DOWN)
        # near-center pixel: n ~ l = v -> lambert + blinn ~ 2 (half-pixel tilt)
        assert rgb[24, 24, 0] == pytest.approx(2.0, abs=0.02)


# ---------------------------------------------------------------------------
# shadows

def _bil(arr, x, y):
    h, w = arr.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = min(int(x), w - 2)
    y0 = min(int(y), h - 2)
    fx, fy = x - x0, y - y0
    v0 = arr[y0, x0] + fx * (arr[y0, x0 + 1] - arr[y0, x0])
    v1 = arr[y0 + 1, x0] + fx * (arr[y0 + 1, x0 + 1] - arr[y0 + 1, x0])
    return v0 + fy * (v1 - v0)


def brute_force_shadow(heights, light, step=1.0):
    """Per-pixel segment occlusion scan: independent of the sweep, same
    quadrature (same ray grid, same sample rule, same bilinear formula)."""
    h, w = heights.shape
    out = np.zeros((h, w), dtype=bool)
    if light.kind == "point":
        lx, ly, lz = light.position
        grid = point_fan(w, h, (lx, ly), step=step, from_center=True)
    else:
        dx, dy, dz = light.direction
        if math.hypot(dx, dy) < 1e-9:
            return out
        grid = directional_fan(w, h, math.atan2(dy, dx), step=step)
        m = abs(dz) / math.hypot(dx, dy)
    for pid in range(h * w):
        py, px = divmod(pid, w)
        k = grid.pix_ray[pid]
        length = grid.pix_len[pid]
        j = int(math.floor(length / step + 0.5)) - 1
        if j < 1:
            continue
        ox, oy = grid.origins[k]
        ddx, ddy = grid.dirs[k]
        t0 = grid.t0[k]
        if light.kind == "point":
            dp = t0 + length
            thr = (heights[py, px] - lz) / dp if dp > 0 else math.inf
        else:
            thr = heights[py, px] + m * (t0 + length)
        for i in range(j):
            t = (i + 0.5) * step
            hv = _bil(heights, ox + ddx * t, oy + ddy * t)
            if light.kind == "point":
                key = (hv - lz) / (t0 + t)
            else:
                key = hv + m * (t0 + t)
            if key > thr:
                out[py, px] = True
                break
    return out


class TestShadows:
    def test_straight_down_light_empty(self, rng):
        heights = rng.uniform(0, 10, (32, 32))
        mask = horizon_shadow(heights, DOWN)
        assert not mask.any()

    def test_flat_scene_empty(self):
        scene = flat_scene()
        light = Light("point", position=(5.0, 5.0, 50.0))
        assert not shadow_mask(scene, light).any()

    def test_column_shadow_length(self):
        # oracle: analytic height-field shadow, h / tan(phi) from the base
        heights = np.zeros((64, 64))
        heights[28:36, 28:36] = 10.0
        phi = math.radians(45.0)
        d = np.array([1.0, 0.0, -math.tan(phi)])
        d /= np.linalg.norm(d)
        light = Light("directional", direction=tuple(d))
        mask = horizon_shadow(heights, light)
        row = mask[31]
        expected_end = 35 + 10.0 / math.tan(phi)
        shadow_cols = np.where(row)[0]
        assert shadow_cols.max() == pytest.approx(expected_end, abs=1.0)
        assert not row[: 28].any()

    def test_matches_brute_force_exactly(self, rng):
        for trial in range(6):
            heights = rng.uniform(0, 8, (7, 9)).repeat(5, axis=0).repeat(5, axis=1)[:32, :40]
            if trial % 2 == 0:
                light = Light("point", position=(
                    float(rng.uniform(-10, 50)), float(rng.uniform(-10, 42)),
                    float(rng.uniform(5, 30))))
            else:
                d = rng.normal(size=3)
                d[2] = -abs(d[2]) - 0.1
                d /= np.linalg.norm(d)
                light = Light("directional", direction=tuple(d))
            got = horizon_shadow(heights, light)
            want = brute_force_shadow(heights, light)
            assert np.array_equal(got, want), f"trial {trial} mismatch"


# ---------------------------------------------------------------------------
# ambient occlusion

class TestAmbientOcclusion:
    def test_flat_is_one(self):
        scene = flat_scene(settings=Settings(ao_enabled=True, ao_k=16))
        ao = ambient_occlusion(scene)
        assert np.allclose(ao, 1.0)

    def test_wall_half_plane_limit(self):
        from mock3d._backend import kernels

        heights = np.zeros((64, 64))
        heights[:, 40:] = 1e7  # effectively infinite wall on the +x half
        ao = kernels.ao_scan(heights, heights, 256, ao_sample_distances(32))
        # a pixel near the base: half the directions hit the wall
        assert ao[32, 38] == pytest.approx(0.5, abs=0.02)

    def test_hemisphere_converges_to_dense_oracle(self):
        from mock3d._backend import kernels

        n0, n1, inside = hemisphere_field(64, 24.0)
        ys, xs = np.mgrid[0:64, 0:64].astype(float)
        r2 = np.clip(24.0**2 - (xs - 31.5) ** 2 - (ys - 31.5) ** 2, 0, None)
        heights = np.sqrt(r2)
        coarse = kernels.ao_scan(heights, heights, 16, ao_sample_distances(32))
        dense = kernels.ao_scan(heights, heights, 256, ao_sample_distances(32))
        assert np.abs(coarse - dense).max() <= 0.05


# ---------------------------------------------------------------------------
# refraction / reflection / fresnel

class TestRefraction:
    def test_zero_thickness_bit_exact(self, rng):
        size = 24
        n0 = rng.uniform(-0.5, 0.5, (size, size))
        m = ShapeMap.from_channels(n0, -n0, np.zeros((size, size)), np.ones((size, size)))
        layer = simple_layer("g", m, ior=1.5)
        scene = build_scene([layer], [DOWN], settings=Settings(refraction=True))
        bg = rng.uniform(0, 1, (size, size, 3))
        out = refraction_pass(scene, layer, bg)
        assert np.array_equal(out, bg)

    def test_flat_normal_identity(self, rng):
        size = 16
        z = np.zeros((size, size))
        m = ShapeMap.from_channels(z, z, z + 1.0, np.ones_like(z))
        layer = simple_layer("g", m, ior=1.5, params=IntegralParams(s2=1.0))
        scene = build_scene([layer], [DOWN], settings=Settings(refraction=True))
        bg = rng.uniform(0, 1, (size, size, 3))
        out = refraction_pass(scene, layer, bg)
        assert np.abs(out - bg).max() < 1e-12

    def test_snell_offset_oracle(self):
        # independent oracle: angle-space Snell via the incidence-plane
        # decomposition (sin/cos of the incidence and refraction angles)
        n = normal_from_field(0.5, 0.0, NormalParams(s=1.0))
        eta, d = 1.5, 10.0
        t, tir = refract_directions(n[None, None], eta)
        assert not tir.any()
        offset_x = t[0, 0, 0] / abs(t[0, 0, 2]) * d

        i = np.array([0.0, 0.0, -1.0])
        cos_i = float(-i @ n)
        theta_t = math.asin(math.sin(math.acos(cos_i)) / eta)
        i_t = i - (i @ n) * n  # tangential component of the incident ray
        tang = i_t / np.linalg.norm(i_t)
        refr = math.sin(theta_t) * tang - math.cos(theta_t) * n
        expect_x = refr[0] / abs(refr[2]) * d
        assert offset_x == pytest.approx(expect_x, abs=1e-4)
        # hand value: 30 deg incidence, asin(sin30/1.5) refraction
        assert offset_x == pytest.approx(-1.8586, abs=1e-3)


class TestReflection:
    def _env(self):
        env = np.zeros((8, 16, 3))
        env[0, :, 0] = 1.0  # zenith row red
        env[4, 0, 1] = 1.0  # -x horizon texel green
        return env

    def test_flat_normal_zenith(self):
        z = np.zeros((8, 8))
        m = ShapeMap.from_channels(z, z, z, np.ones_like(z))
        layer = simple_layer("r", m, normal_params=NormalParams(s=1.0))
        scene = build_scene([layer], [DOWN], settings=Settings(reflection=True),
                            environment=self._env())
        out = reflection_pass(scene, layer)
        assert np.allclose(out[..., 0], 1.0) and np.allclose(out[..., 1], 0.0)

    def test_45_degree_tilt_hits_minus_x_horizon(self):
        nvec = np.array([-1 / math.sqrt(2), 0.0, 1 / math.sqrt(2)])
        r = reflect_directions(nvec[None, None])
        assert np.allclose(r[0, 0], [-1.0, 0.0, 0.0], atol=1e-12)
        texel = sample_environment(self._env(), r)
        assert np.allclose(texel[0, 0], [0.0, 1.0, 0.0])

    def test_random_normals_match_formula(self, rng):
        v = rng.normal(size=(50, 3))
        v[:, 2] = np.abs(v[:, 2]) + 0.1
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        got = reflect_directions(v)
        i = np.array([0.0, 0.0, -1.0])
        want = i - 2.0 * (v @ i)[:, None] * v
        assert np.abs(got - want).max() < 1e-6


class TestFresnel:
    def test_normal_incidence(self):
        assert fresnel_weight(1.0, 1.5) == pytest.approx(0.04)

    def test_grazing(self):
        for eta in (1.1, 1.5, 2.4):
            assert fresnel_weight(0.0, eta) == pytest.approx(1.0)

    def test_half_angle(self):
        assert fresnel_weight(0.5, 1.5) == pytest.approx(0.04 + 0.96 * 0.5**5)


# ---------------------------------------------------------------------------
# compositing

class TestComposite:
    def _two_layer_scene(self, za, zb, size=16):
        z = np.zeros((size, size))
        m = ShapeMap.from_channels(z, z, z, np.ones_like(z))
        red = np.zeros((size, size, 3))
        red[..., 0] = 1.0
        green = np.zeros((size, size, 3))
        green[..., 1] = 1.0
        la = simple_layer("a", m, diffuse=red, z=za)
        lb = simple_layer("b", m, diffuse=green, z=zb)
        return build_scene([la, lb], [DOWN])

    def test_single_opaque_layer(self):
        scene = flat_scene(background=(0.2, 0.4, 0.6))
        out = render_scene(scene).color
        assert (out[..., :3] == 255).all()

    def test_file_order_tie_break(self):
        size = 16
        scene = self._two_layer_scene(np.zeros((size, size)), np.zeros((size, size)))
        out = render_scene(scene).color
        assert (out[..., 0] == 255).all()
        assert (out[..., 1] == 0).all()

    def test_depth_crossing_flips_order(self):
        size = 16
        ys, xs = np.mgrid[0:size, 0:size].astype(float)
        za = 0.1 * xs  # ramps up to 1.5
        zb = np.full((size, size), 0.75)
        scene = self._two_layer_scene(za, zb)
        out = render_scene(scene).color
        sign = za - zb  # oracle: positive -> a in front (red), else green
        red_cols = out[..., 0] == 255
        assert np.array_equal(red_cols, sign > 0)


# ---------------------------------------------------------------------------
# orchestration

class TestRenderScene:
    def test_passes_off_equals_shade_plus_composite(self):
        n0, n1, inside = hemisphere_field(32, 12.0)
        m = ShapeMap.from_channels(n0, n1, np.zeros_like(n0), inside * 1.0)
        layer = simple_layer("h", m)
        light = Light("directional", direction=(0.0, 0.0, -1.0), intensity=0.5)
        scene = build_scene([layer], [light], background=(0.1, 0.1, 0.1))
        out = render_scene(scene).color

        shaded = 0.2 * layer.channels.diffuse + shade_diffuse_specular(scene, layer, light)
        alpha = m.alpha[..., None]
        bg = np.array([0.1, 0.1, 0.1])
        manual = np.clip(shaded * alpha + (1 - alpha) * bg, 0, 1)
        manual8 = np.floor(manual * 255 + 0.5).astype(np.uint8)
        assert np.array_equal(out[..., :3], manual8)

    def test_straight_down_shadows_identical(self):
        n0, n1, inside = hemisphere_field(32, 12.0)
        m = ShapeMap.from_channels(n0, n1, np.zeros_like(n0), inside * 1.0)
        layer = simple_layer("h", m)
        base = build_scene([layer], [DOWN])
        with_shadows = build_scene([layer], [DOWN], settings=Settings(shadows=True))
        assert np.array_equal(render_scene(base).color, render_scene(with_shadows).color)

    def test_deterministic_bit_identical(self):
        h, gx, gy = gaussian_bump(48, sigma=8.0, amp=6.0)
        m = full_map(gx, gy, thickness=np.full((48, 48), 0.5))
        layer = simple_layer("b", m, specular=0.5)
        light = Light("point", position=(10.0, 5.0, 40.0))
        scene = build_scene([layer], [light],
                            settings=Settings(shadows=True, ao_enabled=True, ao_k=8))
        a = render_scene(scene, seed=7).color
        b = render_scene(scene, seed=7).color
        assert np.array_equal(a, b)

    def test_conservative_view_invariance(self):
        h, gx, gy = gaussian_bump(64, sigma=9.0, amp=7.0)
        m = full_map(gx, gy)
        layer = simple_layer("b", m)
        light = Light("point", position=(10.0, 5.0, 60.0))
        s1 = build_scene([layer], [light], settings=Settings(ao_enabled=True, ao_k=8),
                         view=RayFan("point", center=(0.0, 0.0)))
        s2 = build_scene([layer], [light], settings=Settings(ao_enabled=True, ao_k=8),
                         view=RayFan("point", center=(63.0, 40.0)))
        a = render_scene(s1).color.astype(float)
        b = render_scene(s2).color.astype(float)
        assert np.abs(a - b).mean() <= 2.0

    def test_energy_clamped(self):
        scene = flat_scene()
        lights = [Light("directional", direction=(0.0, 0.0, -1.0)) for _ in range(3)]
        scene = build_scene(list(scene.layers), lights)
        out = render_scene(scene).color
        assert out.max() <= 255

    def test_manifest_contents(self):
        scene = flat_scene()
        res = render_scene(scene, seed=3)
        assert res.manifest["seed"] == 3
        assert res.manifest["canvas"] == [24, 24]
        assert "total" in res.manifest["timings"]
        assert res.manifest["backend"] in ("compiled", "python")

    def test_aux_outputs(self):
        scene = flat_scene(settings=Settings(shadows=True, ao_enabled=True, ao_k=8))
        res = render_scene(scene, return_aux=True)
        assert "ao" in res.aux and "shadow_0" in res.aux and "sheets" in res.aux
