"""Shared fixtures: the reference-parameter pipeline is built once per
session (search, calibration, split fields) and reused by every test that
only reads from it.  Tests that need to time or perturb the pipeline build
their own."""

import pytest

from dyadic import (Params, build_split_fields, calibrate_profiles,
                    certify_nonuniqueness, energy_check, find_q)


@pytest.fixture(scope="session")
def params():
    """Reference parameters of the two-solution construction."""
    return Params(lam=2.0, beta=2.5, n_shells=10)


@pytest.fixture(scope="session")
def report(params):
    return find_q(params)


@pytest.fixture(scope="session")
def calibration(report, params):
    return calibrate_profiles(report, params)


@pytest.fixture(scope="session")
def fields(params, report, calibration):
    return build_split_fields(params, report=report, calibration=calibration)


@pytest.fixture(scope="session")
def bundle(fields):
    """Energy identity sweep of the reference fields (the slow part of the
    certificate, shared by the tests that read curves off it)."""
    return energy_check(fields)


@pytest.fixture(scope="session")
def certificate(params, fields):
    cert, _ = certify_nonuniqueness(params, fields=fields)
    return cert
