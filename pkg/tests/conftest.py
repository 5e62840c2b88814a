import contextlib
import io
import os

import numpy as np
import pytest

from st_stickbreaking.cli import run_cli
from st_stickbreaking.core import (
    Dataset,
    McmcConfig,
    Observation,
    SpaceTimePoint,
    validate_dataset,
)

# Pylint and pytest fixtures don't play well together
# pylint: disable=redefined-outer-name

#################################################
#            Implement pytest option            #
#################################################


def pytest_addoption(parser):
    parser.addoption(
        "--slow",
        action="store_true",
        default=False,
        help="Run tests that run long chains",
    )


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: mark test as running long chains"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        # do not skip slow tests
        return
    slow_tests = pytest.mark.skip(reason="need --slow flag to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(slow_tests)


#################################################
#               Implement fixtures              #
#################################################


class Result:
    def __init__(self, args, exit_code, stdout, stderr):
        self.args = args
        self.exit_code = exit_code
        self.stdout = stdout
        self.stderr = stderr

    def assert_success(self):
        assert self.exit_code == 0, "stsb {} failed:\n{}".format(
            " ".join(self.args), self.stderr
        )

    def assert_main_error(self, message=None):
        assert self.exit_code == 1, "expected a runtime error, got {}".format(
            self.exit_code
        )
        if message is not None:
            assert message in self.stderr

    def assert_usage_error(self, message=None):
        assert self.exit_code == 2, "expected a usage error, got {}".format(
            self.exit_code
        )
        if message is not None:
            assert message in self.stderr


class Cli:
    def __init__(self, directory):
        self.directory = directory

    # run():
    #
    # Run one stsb command in-process with its output directory under
    # the fixture directory unless one is given.
    #
    def run(self, args, out_dir=None):
        args = list(args)
        if "--out-dir" not in args and args and args[0] != "--version":
            args += ["--out-dir", out_dir or self.directory]
        stdout, stderr = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(
            stderr
        ):
            code = run_cli(args)
        return Result(args, code, stdout.getvalue(), stderr.getvalue())

    def path(self, *parts):
        return os.path.join(self.directory, *parts)


@pytest.fixture()
def cli(tmp_path):
    directory = tmp_path / "cli"
    directory.mkdir()
    return Cli(str(directory))


@pytest.fixture()
def rng():
    return np.random.default_rng(20260101)


# A small dataset with two well separated groups in space.
@pytest.fixture()
def small_dataset():
    gen = np.random.default_rng(7)
    observations = []
    for t in range(1, 4):
        for _ in range(10):
            s = gen.uniform(0.0, 0.4, size=2)
            observations.append(
                Observation(
                    SpaceTimePoint(s[0], s[1], t), gen.normal(-3.0, 0.3)
                )
            )
            s = gen.uniform(0.6, 1.0, size=2)
            observations.append(
                Observation(
                    SpaceTimePoint(s[0], s[1], t), gen.normal(3.0, 0.3)
                )
            )
    return validate_dataset(Dataset(tuple(observations)))


@pytest.fixture()
def quick_config():
    return McmcConfig(
        truncation=10, n_iter=60, n_burn=30, thin=2, seed=11, log_every=1000
    )
