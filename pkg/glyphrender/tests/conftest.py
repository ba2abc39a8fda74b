import pytest

from fixturefont import FIXTURE_CODEPOINTS, build_fixture_font


@pytest.fixture(scope="session")
def fixture_font(tmp_path_factory):
    path = tmp_path_factory.mktemp("font") / "fixture-cjk.ttf"
    return build_fixture_font(path, FIXTURE_CODEPOINTS)
