import math
from dataclasses import replace

import numpy as np
import pytest

from mrigen_eval.anatomy import region_volumes
from mrigen_eval.exceptions import InputError
from mrigen_eval.phantom import (
    Ellipsoid,
    FamilySpec,
    PhantomSpec,
    demo_spec,
    generate_phantom,
    perturb_phantom,
    phantom_family,
)


def test_analytic_volume():
    assert Ellipsoid("x", (0, 0, 0), (8, 6, 4), 1).analytic_volume == pytest.approx(804.2477, abs=1e-4)


def test_rasterized_volume_close_to_analytic():
    spec = PhantomSpec((40, 40, 40), (1, 1, 1), (Ellipsoid("x", (20, 20, 20), (8, 6, 4), 1),))
    _, labels, truth = generate_phantom(spec)
    measured = region_volumes(labels).volumes_mm3["x"]
    assert abs(measured / truth["x"] - 1) < 0.05


def test_anisotropic_spacing_is_world_scaled():
    spec = PhantomSpec((40, 20, 40), (1.0, 2.0, 1.0), (Ellipsoid("x", (20, 20, 20), (8, 8, 8), 1),))
    _, labels, truth = generate_phantom(spec)
    assert abs(region_volumes(labels).volumes_mm3["x"] / truth["x"] - 1) < 0.05


def test_spec_validation():
    with pytest.raises(InputError, match="outside"):
        PhantomSpec((20, 20, 20), (1, 1, 1), (Ellipsoid("x", (5, 5, 5), (6, 2, 2), 1),))
    with pytest.raises(InputError, match="overlap"):
        PhantomSpec((30, 30, 30), (1, 1, 1), (Ellipsoid("x", (10, 10, 10), (5, 5, 5), 1),
                                             Ellipsoid("y", (14, 10, 10), (5, 5, 5), 2)))
    with pytest.raises(InputError):
        PhantomSpec(noise_sigma=-1)


def test_noise_is_seeded_and_clipped():
    spec = demo_spec((32, 32, 32), noise_sigma=0.2, seed=5)
    a, _, _ = generate_phantom(spec)
    b, _, _ = generate_phantom(spec)
    np.testing.assert_array_equal(a.data, b.data)
    assert a.data.min() >= -1 and a.data.max() <= 1
    c, _, _ = generate_phantom(replace(spec, seed=6))
    assert not np.array_equal(a.data, c.data)


def test_regional_scale_grows_by_cube_of_factor():
    spec = PhantomSpec((48, 48, 48), (1, 1, 1), (Ellipsoid("x", (24, 24, 24), (9, 8, 7), 1),))
    _, labels, _ = generate_phantom(spec)
    before = (labels.data == 1).sum()
    grown = perturb_phantom(labels, "regional-scale", 0.1, mask=labels.data == 1)
    after = (grown.data == 1).sum()
    assert after / before - 1 == pytest.approx(0.331, abs=0.05)


def test_blur_and_background_artifact():
    vol, labels, _ = generate_phantom(demo_spec((32, 32, 32)))
    blurred = perturb_phantom(vol, "blur", 1.5)
    assert np.abs(np.diff(blurred.data, axis=0)).max() < np.abs(np.diff(vol.data, axis=0)).max()
    noisy = perturb_phantom(vol, "background-artifact", 0.1, seed=1, mask=labels.data > 0)
    fg = labels.data > 0
    np.testing.assert_array_equal(noisy.data[fg], vol.data[fg])
    assert noisy.data[~fg].std() > 0.05
    assert perturb_phantom(vol, "blur", 0) is vol
    with pytest.raises(InputError):
        perturb_phantom(vol, "warp", 1)
    with pytest.raises(InputError):
        perturb_phantom(labels, "blur", 1)


def test_family_is_deterministic_and_scaled():
    fam = FamilySpec(demo_spec((32, 32, 32)), n=6, seed=3)
    a = [truth for *_, truth in phantom_family(fam)]
    b = [truth for *_, truth in phantom_family(fam)]
    assert a == b
    big = [truth for *_, truth in phantom_family(replace(fam, scale_region={"alpha": 1.1}))]
    for t0, t1 in zip(a, big):
        assert t1["alpha"] / t0["alpha"] == pytest.approx(1.1**3)
        assert t1["beta"] == t0["beta"]


def test_stratified_factors_have_exact_quantile_mean():
    fam = FamilySpec(demo_spec((32, 32, 32)), n=20, local_sd=0.0, seed=0)
    ratios = [t["alpha"] / (4 / 3 * math.pi * 7 * 6 * 8 * (31 / 47) ** 3) for *_, t in phantom_family(fam)]
    assert np.mean(np.cbrt(ratios)) == pytest.approx(1.0, abs=1e-9)
