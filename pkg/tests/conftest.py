import pytest

from som_anomaly.detector import SomAnomalyDetector
from som_anomaly.synthetic import make_benchmark


@pytest.fixture(scope="session")
def benchmark_run():
    """Fit the desk-scale benchmark once and score it at k=4 and k=1."""
    bench = make_benchmark(seed=0)
    det = SomAnomalyDetector(map_size=8, top_k=4, output_size=bench.input_size)
    det.fit(bench.train)
    maps_k4 = det.transform(bench.test)
    det.top_k = 1
    maps_k1 = det.transform(bench.test)
    det.top_k = 4
    return {
        "bench": bench,
        "detector": det,
        "maps_k4": maps_k4,
        "scores_k4": maps_k4.reshape(maps_k4.shape[0], -1).max(axis=1),
        "maps_k1": maps_k1,
        "scores_k1": maps_k1.reshape(maps_k1.shape[0], -1).max(axis=1),
    }
