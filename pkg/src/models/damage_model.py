"""
준정적 완전 손상 모델 시뮬레이터
변위 u (타원형)와 손상 변수 z (비가역 포함식)를 엇갈림 방식으로 결합한다
"""

import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

# 상위 디렉토리를 Python 경로에 추가
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
from config import (EXPERIMENT_CONFIG, GRID_CONFIG, POTENTIAL_CONFIG, SOLVER_CONFIG,
                    TIME_CONFIG, TRUNCATION_CONFIG)
from src.data_processing.field_io import read_field
from src.errors import AssumptionViolation, NewtonStagnationError, SimulationAborted
from src.numerics.grid import (Field, Grid, check_same_grid, dirichlet_energy,
                               dirichlet_laplacian_matrix, inner, integrate, lp_norm,
                               laplacian_dirichlet, neumann_energy, norms,
                               smallest_dirichlet_eigenvalue)
from src.numerics.potentials import PotentialSpec, TruncationParams, phi_delta, t0_formula, t_delta
from src.solvers.elliptic import solve_elliptic_regularized
from src.solvers.vi_stepper import LOAD_STENCILS, StepInput, advance, assemble_load

logger = logging.getLogger(__name__)

LOAD_PRESETS = ('zero', 'constant', 'sine', 'bump', 'file')
Z0_PRESETS = ('intact', 'constant', 'dip', 'file')
BACKENDS = ('projected', 'yosida')
MAX_HALVINGS = 10
C_OMEGA_MAX_WAVENUMBER = 8
C_OMEGA_SAFETY = 1.5
BUMP_WIDTH = 0.1

LEDGER_COLUMNS = [
    't', 'energy', 'dissipation_cum', 'balance_residual', 'z_min', 'y', 'sqrt_y',
    'grad_u_l2', 'laplace_u_l2', 'laplace_u_l3', 'comp_residual', 'truncation_active',
]
LEDGER_EXTRA_COLUMNS = ['regime', 'z_v_norm', 'phi_sup']


@dataclass(frozen=True)
class SimConfig:
    """시뮬레이션 설정 (필드 이름은 설정 파일 키와 같다)

    섹션별 기본값은 config.py에 있다. c_omega가 None이면 시험 함수족으로 추정한다.
    """

    # [grid]
    dim: int = GRID_CONFIG['dim']
    extent: float = GRID_CONFIG['extent']
    nodes: int = GRID_CONFIG['nodes']
    load: str = GRID_CONFIG['load']
    load_amplitude: float = GRID_CONFIG['load_amplitude']
    load_file: str = GRID_CONFIG['load_file']
    z0: str = GRID_CONFIG['z0']
    z0_amplitude: float = GRID_CONFIG['z0_amplitude']
    z0_file: str = GRID_CONFIG['z0_file']
    # [potential]
    threshold: float = POTENTIAL_CONFIG['threshold']
    family: str = POTENTIAL_CONFIG['family']
    cubic: float = POTENTIAL_CONFIG['cubic']
    # [truncation]
    delta: float = TRUNCATION_CONFIG['delta']
    kind: str = TRUNCATION_CONFIG['kind']
    # [time]
    tau: float = TIME_CONFIG['tau']
    horizon: float = TIME_CONFIG['horizon']
    snapshot_every: int = TIME_CONFIG['snapshot_every']
    # [solver]
    backend: str = SOLVER_CONFIG['backend']
    lam: float = SOLVER_CONFIG['lam']
    epsilon: float = SOLVER_CONFIG['epsilon']
    picard_iters: int = SOLVER_CONFIG['picard_iters']
    load_stencil: str = SOLVER_CONFIG['load_stencil']
    newton_tol: float = SOLVER_CONFIG['newton_tol']
    cg_tol: float = SOLVER_CONFIG['cg_tol']
    c_omega: Optional[float] = None
    c3: float = SOLVER_CONFIG['c3']
    # [experiment]
    perturbation_sizes: Tuple[float, ...] = EXPERIMENT_CONFIG['perturbation_sizes']
    convergence_levels: int = EXPERIMENT_CONFIG['convergence_levels']
    max_work: float = EXPERIMENT_CONFIG['max_work']
    sweep_deltas: Tuple[float, ...] = EXPERIMENT_CONFIG['sweep_deltas']
    sweep_dips: Tuple[float, ...] = EXPERIMENT_CONFIG['sweep_dips']
    sweep_amplitudes: Tuple[float, ...] = EXPERIMENT_CONFIG['sweep_amplitudes']

    def __post_init__(self):
        # 정수/실수/튜플 정규화
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(f.default, tuple):
                object.__setattr__(self, f.name, tuple(float(v) for v in value))
            elif isinstance(f.default, bool):
                continue
            elif isinstance(f.default, int):
                object.__setattr__(self, f.name, int(value))
            elif isinstance(f.default, float):
                object.__setattr__(self, f.name, float(value))
        if self.c_omega is not None:
            object.__setattr__(self, 'c_omega', float(self.c_omega))
        self._validate()

    def _validate(self):
        if self.load not in LOAD_PRESETS:
            raise AssumptionViolation(f"A2: 알 수 없는 외력 프리셋 {self.load}")
        if self.z0 not in Z0_PRESETS:
            raise AssumptionViolation(f"A3: 알 수 없는 초기 손상 프리셋 {self.z0}")
        if self.backend not in BACKENDS:
            raise AssumptionViolation(f"알 수 없는 백엔드: {self.backend}")
        if self.load_stencil not in LOAD_STENCILS:
            raise AssumptionViolation(f"알 수 없는 하중 스텐실: {self.load_stencil}")
        if not self.tau > 0:
            raise AssumptionViolation(f"시간 간격은 양수여야 합니다: tau = {self.tau}")
        if not self.horizon > 0:
            raise AssumptionViolation(f"최종 시간은 양수여야 합니다: T = {self.horizon}")
        if self.lam <= 0 or self.epsilon < 0:
            raise AssumptionViolation(f"lam > 0, epsilon ≥ 0 이어야 합니다: {self.lam}, {self.epsilon}")
        if self.picard_iters < 1 or self.snapshot_every < 1:
            raise AssumptionViolation("picard_iters와 snapshot_every는 1 이상이어야 합니다")
        if self.c_omega is not None and not self.c_omega > 0:
            raise AssumptionViolation(f"c_omega는 양수여야 합니다: {self.c_omega}")
        if self.convergence_levels < 1:
            raise AssumptionViolation("convergence_levels는 1 이상이어야 합니다")
        # 나머지 검증은 각 값 객체가 수행
        _ = (self.grid, self.truncation, self.potential)

    @property
    def grid(self) -> Grid:
        return Grid.uniform(self.dim, self.extent, self.nodes)

    @property
    def truncation(self) -> TruncationParams:
        return TruncationParams(self.delta, self.kind)

    @property
    def potential(self) -> PotentialSpec:
        return PotentialSpec(self.threshold, self.family, self.cubic)

    def with_overrides(self, **changes) -> 'SimConfig':
        return replace(self, **changes)


@dataclass(frozen=True)
class EnergyLedgerEntry:
    """스텝별 에너지 장부 한 줄"""

    t: float
    energy: float
    dissipation_cum: float
    balance_residual: float
    z_min: float
    y: float
    sqrt_y: float
    grad_u_l2: float
    laplace_u_l2: float
    laplace_u_l3: float
    comp_residual: float
    truncation_active: bool
    regime: str
    z_v_norm: float
    phi_sup: float


@dataclass(frozen=True)
class Snapshot:
    t: float
    step: int
    z: Field
    u: Field
    xi: Field


@dataclass
class Trajectory:
    """시간 순 스냅샷, 전체 장부, 이벤트"""

    grid: Grid
    snapshots: List[Snapshot] = field(default_factory=list)
    ledger: List[EnergyLedgerEntry] = field(default_factory=list)
    events: Dict[str, object] = field(default_factory=dict)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def ledger_frame(self) -> pd.DataFrame:
        rows = [{name: getattr(entry, name) for name in LEDGER_COLUMNS + LEDGER_EXTRA_COLUMNS}
                for entry in self.ledger]
        return pd.DataFrame(rows, columns=LEDGER_COLUMNS + LEDGER_EXTRA_COLUMNS)


@dataclass(frozen=True)
class EnergyParts:
    elastic: float
    load_work: float
    interface: float
    potential: float
    regularization: float

    @property
    def total(self) -> float:
        return self.elastic - self.load_work + self.interface + self.potential + self.regularization


def build_load(cfg: SimConfig, grid: Optional[Grid] = None) -> Field:
    """외력 g 프리셋을 노드에서 계산"""
    grid = grid or cfg.grid
    amplitude = cfg.load_amplitude
    if cfg.load == 'zero':
        return grid.zeros()
    if cfg.load == 'constant':
        return grid.constant(amplitude)
    if cfg.load == 'sine':
        return grid.evaluate(lambda *xs: amplitude * np.prod(
            [np.sin(np.pi * x / length) for x, length in zip(xs, grid.extents)], axis=0))
    if cfg.load == 'bump':
        centers = [length / 2 for length in grid.extents]
        return grid.evaluate(lambda *xs: amplitude * np.exp(
            -sum((x - c) ** 2 for x, c in zip(xs, centers)) / (2 * BUMP_WIDTH ** 2)))
    return _field_from_file(cfg.load_file, 'g', grid)


def build_initial_damage(cfg: SimConfig, grid: Optional[Grid] = None) -> Field:
    """초기 손상 z₀ 프리셋 (dip: 1 - a(1 + Πcos(πx/L))/2)"""
    grid = grid or cfg.grid
    amplitude = cfg.z0_amplitude
    if cfg.z0 == 'intact':
        return grid.constant(1.0)
    if cfg.z0 == 'constant':
        return grid.constant(amplitude)
    if cfg.z0 == 'dip':
        return grid.evaluate(lambda *xs: 1.0 - amplitude * 0.5 * (1.0 + np.prod(
            [np.cos(np.pi * x / length) for x, length in zip(xs, grid.extents)], axis=0)))
    return _field_from_file(cfg.z0_file, 'z', grid)


def _field_from_file(path: str, column: str, grid: Grid) -> Field:
    if not path:
        raise AssumptionViolation(f"파일 프리셋에 경로가 없습니다 (열 {column})")
    loaded = read_field(path, column)
    check_same_grid(loaded, grid.zeros())
    return loaded


def estimate_c_omega(grid: Grid) -> float:
    """‖v‖_∞ ≤ c_Ω‖v‖_W 의 이산 추정

    cos(kπx/L) (k ≤ 8, 2차원은 텐서곱) 시험 함수족에서 ‖v‖_∞/‖v‖_W의 최댓값에 안전 계수 1.5를 곱한다.
    """
    coordinates = grid.coordinates()
    wavenumbers = range(C_OMEGA_MAX_WAVENUMBER + 1)
    best = 0.0
    for ks in np.ndindex(*([len(wavenumbers)] * grid.dim)):
        values = np.prod([np.cos(np.pi * k * x / length)
                          for k, x, length in zip(ks, coordinates, grid.extents)], axis=0)
        report = norms(Field(grid, values), 'neumann')
        best = max(best, report.linf / report.w)
    return C_OMEGA_SAFETY * best


class DamageSimulator:
    """준정적 손상 시뮬레이터

    Args:
        cfg (SimConfig): 검증된 설정
        initial_damage (Field): 설정의 z₀ 프리셋 대신 쓸 초기 손상 (섭동 실험용)
    """

    def __init__(self, cfg: SimConfig, initial_damage: Optional[Field] = None):
        self.cfg = cfg
        self.grid = cfg.grid
        self.truncation = cfg.truncation
        self.potential = cfg.potential
        self.g = build_load(cfg, self.grid)
        self.c_omega = cfg.c_omega if cfg.c_omega is not None else estimate_c_omega(self.grid)
        if initial_damage is not None:
            check_same_grid(initial_damage, self.g)
        self.initial_damage = initial_damage

    # ----- 가정 및 초기 상태 -----

    def certificate_value(self, z: Field) -> float:
        """y = c_Ω²‖1 - z‖_W²"""
        return (self.c_omega * norms(z.with_values(1.0 - z.values), 'neumann').w) ** 2

    def check_initial_assumptions(self, z0: Field) -> float:
        """A3 검사: z₀ ≤ 1, ε = c_Ω‖1 - z₀‖_W ≤ 1/2. ε를 반환"""
        if z0.max() > 1.0:
            raise AssumptionViolation(f"A3: z0 ≤ 1 조건 위반 (max = {z0.max():.6g})")
        eps = math.sqrt(self.certificate_value(z0))
        if eps > 0.5:
            raise AssumptionViolation(f"A3: eps = {eps:.4g} > 1/2")
        return eps

    def solve_displacement(self, z: Field):
        return solve_elliptic_regularized(z, self.g, self.truncation, self.cfg.epsilon, self.cfg.cg_tol)

    def initial_state(self) -> Tuple[Field, Field, float]:
        """(z₀, u₀, E₀)"""
        z0 = self.initial_damage if self.initial_damage is not None else build_initial_damage(self.cfg, self.grid)
        eps = self.check_initial_assumptions(z0)
        u0 = self.solve_displacement(z0).u
        energy0 = self.energy(z0, u0)
        logger.info(f"초기 상태 계산 완료: eps = {eps:.4g}, E0 = {energy0:.6g}")
        return z0, u0, energy0

    # ----- 에너지 -----

    def energy_parts(self, z: Field, u: Field) -> EnergyParts:
        """E_δ의 각 항 (탄성 항은 -div(T_δ(z)∇·) 행렬과 일치하는 이산 형태)"""
        check_same_grid(z, u, self.g)
        coefficient = z.with_values(np.asarray(t_delta(z.values, self.truncation)))
        regularization = 0.0
        if self.cfg.epsilon > 0:
            lap_u = dirichlet_laplacian_matrix(self.grid) @ u.flat[self.grid.interior_indices()]
            regularization = 0.5 * self.cfg.epsilon * self.grid.cell_volume * float(lap_u @ lap_u)
        return EnergyParts(
            elastic=dirichlet_energy(u, coefficient),
            load_work=inner(self.g, u),
            interface=neumann_energy(z),
            potential=integrate(z.with_values(np.asarray(self.potential.psi(z.values)))),
            regularization=regularization,
        )

    def energy(self, z: Field, u: Field) -> float:
        return self.energy_parts(z, u).total

    def coercivity_floor(self, z: Field, u: Field) -> float:
        """δ/2‖∇u‖² + ½‖z‖_V² - c/δ, c = C_P²‖g‖²/2 + δ·c_ψ|Ω|

        C_P² = 1/λ_min은 이산 디리클레 라플라시안의 푸앵카레 상수
        """
        delta = self.truncation.delta
        poincare_sq = 1.0 / smallest_dirichlet_eigenvalue(self.grid)
        constant = (0.5 * poincare_sq * inner(self.g, self.g)
                    + delta * self.potential.coercivity_constant() * self.grid.volume)
        return (0.5 * delta * 2.0 * dirichlet_energy(u)
                + 0.5 * self.v_norm(z) ** 2 - constant / delta)

    @staticmethod
    def v_norm(z: Field) -> float:
        return math.sqrt(inner(z, z) + 2.0 * neumann_energy(z))

    # ----- 시간 진행 -----

    def _step(self, z: Field, u: Field, tau: float):
        """한 스텝: 피카르 반복 후 새 변위까지 계산"""
        candidate = z
        u_coupled = u
        result = None
        for k in range(self.cfg.picard_iters):
            if k > 0:
                u_coupled = self.solve_displacement(candidate).u
            load = assemble_load(u_coupled, candidate, self.truncation, self.cfg.load_stencil)
            result = advance(StepInput(z, load, tau), self.potential, self.cfg.backend,
                             self.cfg.lam, self.cfg.newton_tol)
            candidate = result.z_new
        u_new = self.solve_displacement(candidate).u
        return candidate, u_new, result

    def _step_with_rejection(self, z: Field, u: Field, tau: float, depth: int = 0) -> list:
        """뉴턴 정체 시 τ를 반으로 나눠 두 번 진행 (τ/2¹⁰ 미만이면 중단)"""
        try:
            z_new, u_new, result = self._step(z, u, tau)
            return [(tau, z_new, u_new, result)]
        except NewtonStagnationError as e:
            if depth >= MAX_HALVINGS:
                raise SimulationAborted(
                    f"τ = {tau:.3e}에서도 스텝이 실패했습니다 (최소 τ = {self.cfg.tau / 2 ** MAX_HALVINGS:.3e}): {e}")
            logger.warning(f"스텝 거부, τ를 {tau:.3e}에서 {tau / 2:.3e}로 줄입니다: {e}")
            first = self._step_with_rejection(z, u, tau / 2, depth + 1)
            _, z_mid, u_mid, _ = first[-1]
            return first + self._step_with_rejection(z_mid, u_mid, tau / 2, depth + 1)

    def _ledger_entry(self, t: float, z: Field, u: Field, energy0: float, dissipation: float,
                      comp_residual: float, regime: str) -> EnergyLedgerEntry:
        energy = self.energy(z, u)
        y = self.certificate_value(z)
        lap_u = laplacian_dirichlet(u)
        z_min = z.min()
        return EnergyLedgerEntry(
            t=t,
            energy=energy,
            dissipation_cum=dissipation,
            balance_residual=abs(energy + dissipation - energy0),
            z_min=z_min,
            y=y,
            sqrt_y=math.sqrt(y),
            grad_u_l2=math.sqrt(2.0 * dirichlet_energy(u)),
            laplace_u_l2=lp_norm(lap_u, 2),
            laplace_u_l3=lp_norm(lap_u, 3),
            comp_residual=comp_residual,
            truncation_active=bool(z_min < 3.0 * self.truncation.delta),
            regime=regime,
            z_v_norm=self.v_norm(z),
            phi_sup=float(phi_delta(1.0 - z_min, self.truncation)),
        )

    def run(self, progress: bool = False) -> Trajectory:
        """엇갈림 시간 진행 (u 다음 z, 선택적 피카르 재결합)

        T_deg (z_min < 3δ 최초 시각) 이후에도 절단된 계로 계속 진행하고 장부에 extended로 표시한다.
        """
        cfg = self.cfg
        delta = self.truncation.delta
        z, u, energy0 = self.initial_state()
        eps = math.sqrt(self.certificate_value(z))
        trajectory = Trajectory(grid=self.grid)
        trajectory.events.update({
            't_deg': None,
            't0_theoretical': t0_formula(eps, self.truncation, cfg.c3, cfg.horizon),
            'delta': delta,
            'eps': eps,
            'c_omega': self.c_omega,
            'backend': cfg.backend,
            'lam': cfg.lam,
            'picard_iters': cfg.picard_iters,
        })
        trajectory.snapshots.append(Snapshot(0.0, 0, z, u, self.grid.zeros()))
        regime = 'standard' if z.min() >= 3.0 * delta else 'extended'
        if regime == 'extended':
            trajectory.events['t_deg'] = 0.0
        trajectory.ledger.append(self._ledger_entry(0.0, z, u, energy0, 0.0, 0.0, regime))

        n_steps = max(1, int(math.ceil(cfg.horizon / cfg.tau - 1e-9)))
        dissipation = 0.0
        t = 0.0
        logger.info(f"시뮬레이션 시작: {n_steps} 스텝, τ = {cfg.tau:g}, 백엔드 {cfg.backend}")
        for n in tqdm(range(1, n_steps + 1), desc='시간 진행', disable=not progress):
            t_end = cfg.horizon if n == n_steps else n * cfg.tau
            substeps = self._step_with_rejection(z, u, t_end - t)
            degenerated_now = False
            for i, (sub_tau, z_new, u_new, result) in enumerate(substeps):
                increment = z.with_values(z_new.values - z.values)
                dissipation += inner(increment, increment) / sub_tau
                t = t_end if i == len(substeps) - 1 else t + sub_tau
                z, u = z_new, u_new
                if z.min() < 3.0 * delta and trajectory.events['t_deg'] is None:
                    trajectory.events['t_deg'] = t
                    degenerated_now = True
                    logger.info(f"손상 퇴화 감지: t = {t:.6g}, z_min = {z.min():.4g}")
                entry_regime = 'standard' if trajectory.events['t_deg'] is None else 'extended'
                trajectory.ledger.append(self._ledger_entry(
                    t, z, u, energy0, dissipation, result.comp_residual, entry_regime))
            if n % cfg.snapshot_every == 0 or n == n_steps or degenerated_now:
                trajectory.snapshots.append(Snapshot(t, n, z, u, result.xi))
        logger.info(f"시뮬레이션 완료: z_min = {z.min():.4g}, E = {trajectory.ledger[-1].energy:.6g}")
        return trajectory


def initial_state(cfg: SimConfig) -> Tuple[Field, Field, float]:
    return DamageSimulator(cfg).initial_state()


def energy(z: Field, u: Field, cfg: SimConfig) -> float:
    return DamageSimulator(cfg).energy(z, u)


def run(cfg: SimConfig, progress: bool = False) -> Trajectory:
    return DamageSimulator(cfg).run(progress)
