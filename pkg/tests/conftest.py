import hypothesis

hypothesis.settings.register_profile(
    "suite",
    derandomize=True,
    max_examples=60,
    deadline=None,
)
hypothesis.settings.load_profile("suite")

# The acceptance tests collect their verdict lines here; the hook below
# replays them in the terminal summary so they survive pytest's capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
