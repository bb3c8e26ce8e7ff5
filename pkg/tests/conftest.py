import pytest

from plankit.plan import parse_plan
from plankit.registry import canonical_catalog, seed_device_state


@pytest.fixture(scope="session")
def registry():
    return canonical_catalog()


@pytest.fixture
def device_state():
    return seed_device_state(0)


# The fan-in fixture: two contact lookups feeding one calendar event.
FANIN_PLAN_TEXT = (
    '1. get_email_address(name="Sid")\n'
    '2. get_email_address(name="Lutfi")\n'
    '3. create_calendar_event(title="Meeting", attendees=[$1, $2])'
)


@pytest.fixture(scope="session")
def fanin_plan():
    return parse_plan(FANIN_PLAN_TEXT)
