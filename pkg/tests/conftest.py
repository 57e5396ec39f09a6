import os

from hypothesis import HealthCheck, settings

# derandomized so two suite runs see the same examples
settings.register_profile(
    "repo",
    deadline=None,
    max_examples=int(os.environ.get("TILTLAB_HYPOTHESIS_EXAMPLES", "40")),
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")
