"""
공통 테스트 설정과 시나리오
"""

import sys
from pathlib import Path

import pytest

# 프로젝트 루트를 Python 경로에 추가
sys.path.insert(0, str(Path(__file__).parent))

from src.models.damage_model import SimConfig

# ψ(r) = r² - 3r, 1차원 129 노드
STATIONARY = dict(load='zero', z0='intact', tau=1e-2, horizon=0.1)
MILD = dict(load='sine', load_amplitude=5.0, z0='intact', tau=1e-2, horizon=0.5, picard_iters=2)
STRONG = dict(load='sine', load_amplitude=10.0, z0='intact', tau=5e-3, horizon=0.3)


@pytest.fixture
def stationary_config():
    return SimConfig(**STATIONARY)


@pytest.fixture
def mild_config():
    return SimConfig(**MILD)


@pytest.fixture
def strong_config():
    return SimConfig(**STRONG)
