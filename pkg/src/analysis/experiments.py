"""
궤적 위의 실험: 비퇴화 인증서 감시, 연속 의존성, 수렴 연구, 매개변수 스윕, 사전 추정 상수
독립 실행은 joblib으로 병렬 처리한다 (DAMAGE_SIM_THREADS로 상한)
"""

import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import linregress
from tqdm import tqdm

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
import config
from src.errors import AssumptionViolation, ResourceCapExceeded
from src.models.damage_model import (DamageSimulator, SimConfig, Trajectory, build_initial_damage,
                                     estimate_c_omega)
from src.numerics.grid import Field, Grid, lp_norm, norms
from src.numerics.potentials import b_delta

logger = logging.getLogger(__name__)

FIT_SLACK = 1e-12
STABILITY_SIZE = 1e-3
MONOTONE_TOLERANCE = 1e-14


def _n_jobs(n_jobs: Optional[int]) -> int:
    return n_jobs if n_jobs is not None else config.get_thread_count()


# ----- 인증서 -----

@dataclass
class CertificateReport:
    """비퇴화 인증서 y(t) = c_Ω²‖1 - z(t)‖_W² 검사 결과

    c3_fitted는 포락선 B⁻¹(B(ε²) + ĉ₃δ⁻¹⁰t^{1/3})이 관측된 y를 덮는 가장 작은 ĉ₃
    """

    eps: float
    t0: float
    t_deg: Optional[float]
    window_end: float
    window_max_sqrt_y: float
    window_ok: bool
    c3_fitted: float
    violations: List[float] = field(default_factory=list)
    nondegeneration_ok: bool = True
    nondegeneration_estimated_ok: bool = True

    @property
    def passed(self) -> bool:
        return (self.window_ok and not self.violations
                and self.nondegeneration_ok and self.nondegeneration_estimated_ok)

    def as_dict(self) -> Dict[str, object]:
        return {
            'eps': self.eps, 't0': self.t0, 't_deg': self.t_deg, 'window_end': self.window_end,
            'window_max_sqrt_y': self.window_max_sqrt_y, 'window_ok': self.window_ok,
            'c3_fitted': self.c3_fitted, 'violations': len(self.violations),
            'nondegeneration_ok': self.nondegeneration_ok,
            'nondegeneration_estimated_ok': self.nondegeneration_estimated_ok,
        }


def certificate_monitor(traj: Trajectory, cfg: SimConfig) -> CertificateReport:
    """인증서 검사

    (i) t ≤ min(T_deg, T₀)에서 y^{1/2} ≤ 1 - 3δ
    (ii) ĉ₃ = max_{t>0} (B(y(t)) - B(ε²))·δ¹⁰ / t^{1/3} (음수면 0)
    (iii) B(y(t)) - B(ε²) ≤ ĉ₃δ⁻¹⁰t^{1/3} + 여유가 깨지는 시각 목록
    그리고 y^{1/2} ≤ 1 - 3δ인 모든 시각에서 z_min ≥ 3δ인지 (설정된 c_Ω와 이산 추정 c_Ω 모두)
    """
    p = cfg.truncation
    delta = p.delta
    ledger = traj.ledger_frame()
    eps = float(traj.events['eps'])
    t0 = float(traj.events['t0_theoretical'])
    t_deg = traj.events.get('t_deg')
    window_end = min(t0, t_deg if t_deg is not None else math.inf)
    limit = 1.0 - 3.0 * delta

    in_window = ledger[ledger['t'] <= window_end]
    window_max = float(in_window['sqrt_y'].max()) if len(in_window) else 0.0
    window_ok = bool(window_max <= limit)

    b_eps = b_delta(eps ** 2, p).value
    later = ledger[ledger['t'] > 0]
    gaps = np.array([b_delta(y, p).value - b_eps for y in later['y']])
    scales = later['t'].to_numpy() ** (1.0 / 3.0)
    c3_fitted = float(max(0.0, np.max(gaps * delta ** 10 / scales))) if len(gaps) else 0.0
    envelope = c3_fitted * delta ** -10 * scales
    violations = [float(t) for t, gap, env in zip(later['t'], gaps, envelope)
                  if gap > env + FIT_SLACK * max(1.0, abs(gap))]

    certified = ledger['sqrt_y'] <= limit
    nondegeneration_ok = bool(np.all(ledger.loc[certified, 'z_min'] >= 3.0 * delta))

    # 이산 추정 c_Ω로 스냅샷에서 다시 확인
    c_estimated = estimate_c_omega(traj.grid)
    nondegeneration_estimated_ok = True
    for snapshot in traj.snapshots:
        defect = snapshot.z.with_values(1.0 - snapshot.z.values)
        if c_estimated * norms(defect, 'neumann').w <= limit and snapshot.z.min() < 3.0 * delta:
            nondegeneration_estimated_ok = False

    report = CertificateReport(
        eps=eps, t0=t0, t_deg=t_deg, window_end=window_end, window_max_sqrt_y=window_max,
        window_ok=window_ok, c3_fitted=c3_fitted, violations=violations,
        nondegeneration_ok=nondegeneration_ok,
        nondegeneration_estimated_ok=nondegeneration_estimated_ok,
    )
    if not report.passed:
        logger.warning(f"인증서 검사 실패: {report.as_dict()}")
    logger.info(f"인증서 검사 완료: ĉ₃ = {c3_fitted:.6e}, 창 끝 = {window_end:.3e}")
    return report


# ----- 연속 의존성 -----

def perturbation_profile(grid: Grid) -> Field:
    """η = -(1 + Πcos(πx/L))/2 ≤ 0 (z₀ + s·η ≤ 1 유지)"""
    return grid.evaluate(lambda *xs: -0.5 * (1.0 + np.prod(
        [np.cos(np.pi * x / length) for x, length in zip(xs, grid.extents)], axis=0)))


def _run_from(cfg: SimConfig, z0: Optional[Field] = None) -> Trajectory:
    return DamageSimulator(cfg, z0).run()


def _stability_ratios(base: Trajectory, perturbed: Trajectory, size: float) -> pd.DataFrame:
    # 퇴화 시각 스냅샷은 실행마다 다를 수 있어 같은 스텝끼리만 비교
    by_step = {s.step: s for s in perturbed.snapshots}
    pairs = [(a, by_step[a.step]) for a in base.snapshots if a.step in by_step]
    z_diff0 = pairs[0][0].z.with_values(pairs[0][1].z.values - pairs[0][0].z.values)
    denominator = norms(z_diff0, 'neumann').h1
    identical = all(
        np.array_equal(a.z.values, b.z.values) and np.array_equal(a.u.values, b.u.values)
        for a, b in pairs)
    rows = []
    for a, b in pairs:
        z_diff = a.z.with_values(b.z.values - a.z.values)
        u_diff = a.u.with_values(b.u.values - a.u.values)
        numerator = norms(z_diff, 'neumann').h1 + norms(u_diff, 'dirichlet').h1
        # 0/0은 비율 0으로 둔다
        ratio = numerator / denominator if denominator > 0 else 0.0
        rows.append({'size': size, 't': a.t, 'ratio': ratio, 'identical': identical})
    return pd.DataFrame(rows)


def continuous_dependence_experiment(cfg: SimConfig, perturbation_sizes: Sequence[float],
                                     n_jobs: Optional[int] = None) -> pd.DataFrame:
    """z₀와 z₀ + s·η에서 출발한 쌍둥이 실행의 안정성 비율

    ratio(t) = (‖Z(t)‖_V + ‖U(t)‖_{V₀}) / ‖Z(0)‖_V, 열: size, t, ratio, identical
    """
    simulator = DamageSimulator(cfg)
    z0 = build_initial_damage(cfg, simulator.grid)
    eta = perturbation_profile(simulator.grid)
    starts = []
    for size in perturbation_sizes:
        if size < 0:
            raise AssumptionViolation(f"섭동 크기는 음이 아니어야 합니다: {size}")
        perturbed = z0.with_values(z0.values + size * eta.values)
        # 섭동된 z₀도 A3를 만족해야 한다
        simulator.check_initial_assumptions(perturbed)
        starts.append(perturbed)

    logger.info(f"연속 의존성 실험 시작: 섭동 크기 {list(perturbation_sizes)}")
    runs = Parallel(n_jobs=_n_jobs(n_jobs), prefer='threads')(
        delayed(_run_from)(cfg, start) for start in [z0] + starts)
    base, perturbed_runs = runs[0], runs[1:]
    tables = [_stability_ratios(base, run, size) for size, run in zip(perturbation_sizes, perturbed_runs)]
    table = pd.concat(tables, ignore_index=True)
    logger.info(f"연속 의존성 실험 완료: 최대 비율 {stability_summary(table).to_dict()}")
    return table


def stability_summary(table: pd.DataFrame) -> pd.Series:
    """섭동 크기별 최대 비율"""
    return table.groupby('size')['ratio'].max()


# ----- 수렴 연구 -----

@dataclass
class ConvergenceResult:
    table: pd.DataFrame
    monotone: bool
    fitted_order: float


def _level_config(cfg: SimConfig, level: int) -> SimConfig:
    return cfg.with_overrides(nodes=(cfg.nodes - 1) * 2 ** level + 1, tau=cfg.tau / 2 ** level)


def _restrict(values: np.ndarray, factor: int) -> np.ndarray:
    return values[tuple(slice(None, None, factor) for _ in range(values.ndim))]


def convergence_study(cfg: SimConfig, levels: Optional[int] = None,
                      n_jobs: Optional[int] = None) -> ConvergenceResult:
    """(h, τ), (h/2, τ/2), ... 에서 z(T)의 연속 차이와 관측 차수

    열: level, nodes, tau, l2_diff, order (차이는 level과 level+1 사이, 성긴 격자로 주입)
    """
    levels = levels if levels is not None else cfg.convergence_levels
    if levels < 3:
        raise AssumptionViolation(f"수렴 연구는 3단계 이상이 필요합니다: levels = {levels}")
    configs = [_level_config(cfg, level) for level in range(levels)]
    work = sum(c.nodes ** c.dim * math.ceil(c.horizon / c.tau) * (c.picard_iters + 1) for c in configs)
    if work > cfg.max_work:
        raise ResourceCapExceeded(f"수렴 연구 계산량 {work:.3e}가 상한 {cfg.max_work:.3e}를 넘습니다")

    logger.info(f"수렴 연구 시작: {levels}단계, 계산량 {work:.3e}")
    finals = Parallel(n_jobs=_n_jobs(n_jobs), prefer='threads')(
        delayed(_run_from)(c) for c in configs)
    diffs = []
    for coarse, fine in zip(finals[:-1], finals[1:]):
        restricted = coarse.final.z.with_values(_restrict(fine.final.z.values, 2))
        diffs.append(lp_norm(restricted.with_values(restricted.values - coarse.final.z.values), 2))

    rows = []
    for level, diff in enumerate(diffs):
        order = np.nan
        if level + 1 < len(diffs) and diffs[level + 1] > 0 and diff > 0:
            order = math.log2(diff / diffs[level + 1])
        rows.append({'level': level, 'nodes': configs[level].nodes, 'tau': configs[level].tau,
                     'l2_diff': diff, 'order': order})
    table = pd.DataFrame(rows)

    monotone = all(later <= earlier + MONOTONE_TOLERANCE for earlier, later in zip(diffs[:-1], diffs[1:]))
    if not monotone:
        logger.warning(f"연속 차이가 단조 감소하지 않습니다: {diffs}")
    positive = [(c.tau, d) for c, d in zip(configs, diffs) if d > 0]
    fitted_order = np.nan
    if len(positive) >= 2:
        fitted_order = float(linregress(np.log([p[0] for p in positive]), np.log([p[1] for p in positive])).slope)
    logger.info(f"수렴 연구 완료: 차이 {diffs}, 추정 차수 {fitted_order}")
    return ConvergenceResult(table=table, monotone=monotone, fitted_order=fitted_order)


# ----- 스윕 -----

SWEEP_COLUMNS = ['delta', 'z0_amplitude', 'eps', 'load_amplitude', 't_deg', 'c3_fitted',
                 'max_ratio', 'status']


def _sweep_point(cfg: SimConfig, delta: float, dip: float, amplitude: float) -> dict:
    row = {'delta': delta, 'z0_amplitude': dip, 'eps': np.nan, 'load_amplitude': amplitude,
           't_deg': np.nan, 'c3_fitted': np.nan, 'max_ratio': np.nan, 'status': 'ok'}
    load = cfg.load if cfg.load not in ('zero', 'file') else 'sine'
    point = cfg.with_overrides(delta=delta, z0='dip', z0_amplitude=dip, load=load, load_amplitude=amplitude)
    try:
        trajectory = _run_from(point)
        report = certificate_monitor(trajectory, point)
        stability = continuous_dependence_experiment(point, [STABILITY_SIZE], n_jobs=1)
    except AssumptionViolation as e:
        logger.warning(f"스윕 점 건너뜀 (δ = {delta:g}, dip = {dip:g}, A = {amplitude:g}): {e}")
        row['status'] = str(e)
        return row
    row.update({
        'eps': report.eps,
        't_deg': report.t_deg if report.t_deg is not None else np.nan,
        'c3_fitted': report.c3_fitted,
        'max_ratio': float(stability['ratio'].max()),
    })
    return row


def sweep(cfg: SimConfig, n_jobs: Optional[int] = None, progress: bool = False) -> pd.DataFrame:
    """(δ, z₀ 파임 진폭, 하중 진폭) 격자 위의 실행 요약"""
    points = [(d, a, amp) for d in cfg.sweep_deltas for a in cfg.sweep_dips for amp in cfg.sweep_amplitudes]
    logger.info(f"스윕 시작: {len(points)}개 점")
    rows = Parallel(n_jobs=_n_jobs(n_jobs), prefer='threads')(
        delayed(_sweep_point)(cfg, *point) for point in tqdm(points, desc='스윕', disable=not progress))
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


# ----- 사전 추정 상수 -----

def apriori_report(traj: Trajectory, cfg: SimConfig) -> Dict[str, float]:
    """사전 추정 부등식을 만족하는 가장 작은 상수 (주장 없이 보고만)

    grad_u: ‖∇u‖ ≤ c·φ_δ(‖1 - z‖_∞)
    z_v: ‖z‖_V ≤ c(δ^{-1/2} + ‖z₀‖_V)
    z_t: ‖z_t‖_{L²(0,t;H)} ≤ c(δ^{-1/2} + ‖z₀‖_V)
    """
    ledger = traj.ledger_frame()
    scale = cfg.truncation.delta ** -0.5 + float(ledger['z_v_norm'].iloc[0])
    return {
        'grad_u': float((ledger['grad_u_l2'] / ledger['phi_sup']).max()),
        'z_v': float(ledger['z_v_norm'].max() / scale),
        'z_t': float(math.sqrt(ledger['dissipation_cum'].iloc[-1]) / scale),
    }
