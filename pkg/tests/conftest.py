import numpy as np
import pytest

import ecv


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the tree kernels once so timed assertions see warm code
    rng = np.random.default_rng(0)
    data = ecv.Dataset(rng.standard_normal((40, 6)), rng.standard_normal(40))
    ens = ecv.fit_ensemble(ecv.PredictorSpec.tree(min_node_size=2), data, 20, 2,
                           "subagging", 0)
    ecv.predict_ensemble(ens, data.x)
