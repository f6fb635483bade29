import json

import pytest

from scripts.run_desk_acceptance import run_acceptance


@pytest.mark.slow
def test_desk_acceptance(tmp_path):
    assert run_acceptance(tmp_path, epochs=30, seed=0)
    summary = json.loads((tmp_path / "acceptance.json").read_text())
    assert summary["passed"]
