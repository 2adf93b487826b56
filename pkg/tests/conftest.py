"""Shared pytest hooks.

At the end of a run that touched the acceptance suite, print a one-line
verdict per acceptance check so the overall contract is readable at a
glance without scrolling through the full test listing.
"""

ACCEPTANCE_LABELS = {
    "test_clock_augmentation_multiplies_the_space":
        "1. search-space arithmetic: 17,472 configs x 7 clocks = 122,304",
    "test_power_model_round_trip_recovers_parameters":
        "2. power-model fit round trip within stated tolerances",
    "test_recommended_frequency_matches_a_dense_sweep":
        "3. recommended frequency equals the dense-sweep argmin on the grid",
    "test_ten_percent_bands_prune_most_of_the_clock_grid":
        "4. ten-percent clock bands prune 75-88% of every device grid",
    "test_global_search_beats_every_staged_pipeline":
        "5. global tuning beats all staged pipelines on the mimic fixture",
    "test_pareto_front_is_exact_and_shows_the_energy_trade":
        "6. pareto front matches the quadratic oracle and shows the trade",
    "test_descent_statistics_match_the_absorbing_model":
        "7. absorbing-walk weights match 10,000 simulated descents",
    "test_sensor_semantics_follow_the_stated_rules":
        "8. averaged, continuous, and instant sensor rules hold",
    "test_tuning_is_deterministic_and_cache_aware":
        "9. same seed reproduces a run byte for byte; warm cache runs free",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for status, passed in (("passed", True), ("failed", False), ("error", False)):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" not in report.nodeid:
                continue
            if status != "error" and report.when != "call":
                continue
            name = report.nodeid.split("::")[-1]
            if name in ACCEPTANCE_LABELS:
                verdicts.setdefault(name, passed)
    if not verdicts:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance checks")
    for name, label in ACCEPTANCE_LABELS.items():
        if name not in verdicts:
            continue
        verdict = "PASS" if verdicts[name] else "FAIL"
        marker = {"PASS": "green", "FAIL": "red"}[verdict]
        terminalreporter.write_line(f"  [{verdict}] {label}", **{marker: True})
