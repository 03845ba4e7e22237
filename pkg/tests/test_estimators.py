import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from jacket_shm.damage_bayes import synthetic_measurement
from jacket_shm.estimators import DamageIdentifier, SensorPlacement
from jacket_shm.structural_model import damage_vector


def test_params_round_trip():
    sp = SensorPlacement(criterion="ke", algorithm="nsga2", random_state=4)
    assert clone(sp).get_params() == sp.get_params()
    assert sp.set_params(n_modes=4).n_modes == 4


def test_placement_exhaustive(ctx):
    sp = SensorPlacement(algorithm="exhaustive").fit(ctx)
    np.testing.assert_array_equal(sp.select(8), np.arange(12) < 8)
    assert sp.n_candidates_ == 12
    assert sp.score() == pytest.approx(sp.score(reference=[sp.front_]))


def test_placement_small_mola(ctx):
    sp = SensorPlacement(params={"pop": 20, "N_iter": 2, "Np": 150, "Rc": 30}).fit(ctx)
    assert sp.select(12).sum() <= 12


def test_placement_errors(ctx):
    with pytest.raises(NotFittedError):
        SensorPlacement().select()
    with pytest.raises(ValueError):
        SensorPlacement(algorithm="simplex").fit(ctx)
    with pytest.raises(TypeError):
        SensorPlacement().fit(np.eye(3))
    with pytest.raises(ValueError):
        SensorPlacement(criterion="xyz").fit(ctx)


def test_identifier(jacket, evp8):
    meas = synthetic_measurement(jacket, evp8, damage_vector(36, {"E3": 0.8}), 0.0, 0)
    est = DamageIdentifier(jacket, evp8, estimated_elements=[2, 8], n_iter=400, burn_in=200,
                           random_state=1).fit(meas)
    damage = est.predict()
    assert damage.shape == (36,)
    assert damage[2] == pytest.approx(0.8, abs=0.05)
    assert np.count_nonzero(damage) <= 2
    K = est.updated_matrices().K
    assert K.shape == (72, 72)


def test_identifier_errors(jacket, evp8):
    meas = synthetic_measurement(jacket, evp8, np.zeros(36), 0.0, 0)
    with pytest.raises(NotFittedError):
        DamageIdentifier(jacket, evp8).predict()
    with pytest.raises(ValueError):
        DamageIdentifier().fit(meas)
