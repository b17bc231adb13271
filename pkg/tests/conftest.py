import time

import pytest

from pgac import ConstantStep, ControllerSpec, ExperimentConfig, InverseNormM, benchmark_plant, run_monte_carlo


@pytest.fixture(scope="session")
def benchmark():
    return benchmark_plant()


@pytest.fixture(scope="session")
def benchmark_batch():
    """20-trial Monte Carlo batch for the four gradient controllers.

    Shared between the convergence-rate and stability-signature tests so
    the expensive rollouts happen once per session.
    """
    specs = {
        "indirect_vanilla": ControllerSpec("indirect_vanilla", ConstantStep(0.02)),
        "indirect_natural": ControllerSpec("indirect_natural", ConstantStep(0.2)),
        "indirect_gauss_newton": ControllerSpec("indirect_gauss_newton", ConstantStep(0.5)),
        "direct_vanilla": ControllerSpec("direct_vanilla", InverseNormM(0.2)),
    }
    start = time.perf_counter()
    summaries = {}
    for name, spec in specs.items():
        config = ExperimentConfig(controller=spec, seed=7, trials=20)
        summaries[name] = run_monte_carlo(config, jobs=1)
    elapsed = time.perf_counter() - start
    return {"summaries": summaries, "elapsed": elapsed}
