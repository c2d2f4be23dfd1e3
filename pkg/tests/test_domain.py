# -*- coding: utf-8 -*-
import pytest

from ipbsim.domain import BEHAVIOR_POINTS, RISK_POINTS, TIERS, \
    behavior_catalog, behavior_ids, discretize, ensure_condition_is_valid, \
    intervention_labels, likert_midpoint, lookup_behavior, make_condition, \
    make_context, make_measures, tier_label, tier_rank
from ipbsim.exceptions import DomainError, InvalidConfiguration

from fixtures import population

SWEEP = [i / 1000 for i in range(1001)]


def test_catalog_holds_eleven_behaviors_in_canonical_order():
    catalog = behavior_catalog({})
    assert len(catalog) == 11
    assert catalog[0].id == "mask_green_space"
    assert catalog[-1].id == "drain_seal_maintenance"
    assert len({b.id for b in catalog}) == 11


def test_catalog_labels_can_be_overridden():
    catalog = behavior_catalog({"catalog": {"toilet_lid": "lid down"}})
    assert lookup_behavior("lid down", {
        "catalog": {"toilet_lid": "lid down"}}).id == "toilet_lid"
    assert [b.id for b in catalog] == behavior_ids({})


def test_catalog_overrides_must_name_known_behaviors():
    with pytest.raises(InvalidConfiguration) as x:
        behavior_catalog({"catalog": {"juggling": "juggling"}})
    assert "juggling" in str(x.value)


def test_lookup_behavior_by_id_or_label():
    assert lookup_behavior("hand_washing", {}).id == "hand_washing"
    assert lookup_behavior(
        "Mask Wearing In Elevators", {}).id == "mask_elevator"
    with pytest.raises(DomainError):
        lookup_behavior("juggling", {})


@pytest.mark.parametrize("points", [BEHAVIOR_POINTS, RISK_POINTS])
def test_discretize_is_monotonic_and_surjective(points: int):
    levels = [discretize(p, points) for p in SWEEP]
    assert all(a <= b for a, b in zip(levels, levels[1:]))
    assert set(levels) == set(range(1, points + 1))


@pytest.mark.parametrize("points", [BEHAVIOR_POINTS, RISK_POINTS])
def test_discretize_boundaries(points: int):
    assert discretize(0.0, points) == 1
    assert discretize(1.0, points) == points
    for k in range(1, points):
        assert discretize(k / points, points) == k + 1


def test_discretize_half_on_both_scales():
    assert discretize(0.5, RISK_POINTS) == 4
    assert discretize(0.5, BEHAVIOR_POINTS) == 3


def test_discretize_rejects_invalid_input():
    for p in (-0.001, 1.001, float("nan"), "0.5", None, True):
        with pytest.raises(DomainError):
            discretize(p, BEHAVIOR_POINTS)
    with pytest.raises(DomainError):
        discretize(0.5, 7)


def test_likert_midpoint_falls_in_its_own_bin():
    for points in (BEHAVIOR_POINTS, RISK_POINTS):
        for level in range(1, points + 1):
            assert discretize(likert_midpoint(level, points), points) == level


def test_tiers_are_ranked_by_strictness():
    assert [tier_rank(t) for t in TIERS] == [0, 1, 2, 3]
    assert tier_label("SelfHealthMonitoring") == "Self-Health Monitoring"
    with pytest.raises(DomainError):
        tier_rank("Lockdown")


def test_intervention_labels_can_be_overridden():
    labels = intervention_labels(
        {"interventions": {"home_quarantine": "home isolation"}})
    assert len(labels) == 9
    assert labels["home_quarantine"] == "home isolation"
    with pytest.raises(InvalidConfiguration):
        intervention_labels({"interventions": {"curfew": "curfew"}})


def test_no_prevention_and_control_cancels_every_intervention():
    measures = make_measures("NoPC", settings={})
    assert set(measures["interventions"].values()) == {"Cancelled"}

    isolation = make_measures("Isolation", settings={})
    assert set(isolation["interventions"].values()) == {"Active"}


def test_stricter_tiers_activate_more_interventions():
    active = [
        sum(1 for s in make_measures(t, settings={})[
            "interventions"].values() if s == "Active")
        for t in TIERS
    ]
    assert active == sorted(active)
    assert active[0] == 0


def test_no_prevention_and_control_cannot_have_active_interventions():
    with pytest.raises(DomainError) as x:
        make_measures("NoPC", interventions={"community_lockdown": "Active"},
                      settings={})
    assert "no intervention can be active" in str(x.value)


def test_burden_is_numeric_or_qualitative():
    numeric = make_context(2.0, 0.01, confirmed=3, fatalities=1)
    assert numeric["burden"] == {
        "kind": "numeric", "confirmed": 3, "fatalities": 1}

    qualitative = make_context(10.0, 0.0005, descriptors=["surging cases"])
    assert qualitative["burden"]["kind"] == "qualitative"

    condition = population.condition()
    condition["context"]["burden"]["descriptors"] = ["surging cases"]
    with pytest.raises(DomainError) as x:
        ensure_condition_is_valid(condition)
    assert "both numeric and qualitative" in str(x.value)


def test_context_values_are_validated():
    with pytest.raises(DomainError):
        make_context(0.0, 0.01)
    with pytest.raises(DomainError):
        make_context(2.0, 1.0)
    with pytest.raises(DomainError):
        make_context(2.0, -0.1)


def test_condition_requires_a_label():
    with pytest.raises(DomainError):
        make_condition(
            make_context(2.0, 0.01), make_measures("RegularPC"), "")
    with pytest.raises(DomainError):
        ensure_condition_is_valid({})
