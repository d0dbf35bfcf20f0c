import numpy as np
import pytest

from enrolboost.data_model import Cohort, FeatureSchema, categorical, numeric
from enrolboost.synth import SynthConfig, generate_cohort


def make_cohort(y=None, **cols):
    """Cohort over ad-hoc columns. Lists of strings become categorical
    features with sorted levels; everything else is numeric."""
    feats, values = [], {}
    for name, v in cols.items():
        if len(v) and isinstance(v[0], str):
            v = [str(x) for x in v]
            feats.append(categorical(name, sorted(set(v))))
        else:
            feats.append(numeric(name))
        values[name] = v
    targets = ()
    if y is not None:
        targets = ("y",)
        values["y"] = list(y)
    return Cohort.from_values(FeatureSchema(tuple(feats), targets), values)


@pytest.fixture(scope="session")
def synth_small():
    return generate_cohort(SynthConfig(n=3000, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
