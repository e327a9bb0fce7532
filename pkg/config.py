"""
손상 시뮬레이터 설정 파일
설정 파일(INI)의 섹션별 기본값과 종료 코드, 환경 변수 접근 함수
"""

import os

from dotenv import load_dotenv

load_dotenv()

# 격자, 외력 g, 초기 손상 z0
GRID_CONFIG = {
    "dim": 1,
    "extent": 1.0,
    "nodes": 129,
    "load": "zero",          # zero, constant, sine, bump, file
    "load_amplitude": 0.0,
    "load_file": "",
    "z0": "intact",          # intact, constant, dip, file
    "z0_amplitude": 0.0,
    "z0_file": "",
}

# 배치 퍼텐셜 ψ(r) = r² - w·r (+ a3·r³)
POTENTIAL_CONFIG = {
    "threshold": 3.0,
    "family": "quadratic",   # quadratic, cubic_core
    "cubic": 0.0,
}

# 절단 함수 T_δ
TRUNCATION_CONFIG = {
    "delta": 1.0 / 12.0,
    "kind": "c11",           # c11, identity
}

# 시간 진행
TIME_CONFIG = {
    "tau": 1e-3,
    "horizon": 0.1,
    "snapshot_every": 10,
}

# 솔버
SOLVER_CONFIG = {
    "backend": "projected",  # projected, yosida
    "lam": 1e-4,
    "epsilon": 0.0,
    "picard_iters": 1,
    "load_stencil": "face",  # face, centered
    "newton_tol": 1e-9,
    "cg_tol": 1e-10,
    "c_omega": "auto",
    "c3": 1.0,
}

# 실험 (안정성, 수렴, 스윕)
EXPERIMENT_CONFIG = {
    "perturbation_sizes": (1e-2, 1e-3, 1e-4),
    "convergence_levels": 3,
    "max_work": 5e7,
    "sweep_deltas": (1.0 / 24.0, 1.0 / 12.0),
    "sweep_dips": (0.0, 0.05),
    "sweep_amplitudes": (5.0, 10.0),
}

CONFIG_SECTIONS = {
    "grid": GRID_CONFIG,
    "potential": POTENTIAL_CONFIG,
    "truncation": TRUNCATION_CONFIG,
    "time": TIME_CONFIG,
    "solver": SOLVER_CONFIG,
    "experiment": EXPERIMENT_CONFIG,
}

# 종료 코드
EXIT_CODES = {
    "success": 0,
    "runtime": 1,
    "parse": 2,
    "assumption": 3,
    "invariant": 4,
}

THREADS_ENV_VAR = "DAMAGE_SIM_THREADS"


def get_thread_count() -> int:
    """병렬 실행 수 (DAMAGE_SIM_THREADS, 없으면 CPU 수)"""
    value = os.getenv(THREADS_ENV_VAR)
    if not value:
        return os.cpu_count() or 1
    try:
        return max(1, int(value))
    except ValueError:
        return 1
