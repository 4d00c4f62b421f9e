from __future__ import annotations

from hypothesis import HealthCheck, settings

# Invariant suites are part of the acceptance gate: deterministic, no
# deadline (CI boxes vary), 500 cases where a test asks for them.
settings.register_profile(
    "cytodet",
    deadline=None,
    derandomize=True,
    max_examples=200,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("cytodet")
