"""
스냅샷/장부/이벤트/목록 파일 입출력
모든 실수는 '%.17g'로 기록해 다시 읽었을 때 같은 값이 되게 한다
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from src.errors import GridMismatchError, InvariantViolation
from src.numerics.grid import Field, Grid

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
CSV_ENCODING = 'utf-8-sig'
COORDINATE_COLUMNS = ('x', 'y')
SNAPSHOT_DIR = 'snapshots'
LEDGER_FILE = 'ledger.csv'
EVENTS_FILE = 'events.txt'
MANIFEST_FILE = 'manifest.txt'


def _format_value(value) -> str:
    if value is None:
        return 'none'
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def save_table(df: pd.DataFrame, path: Path) -> Path:
    """표를 CSV로 저장"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, encoding=CSV_ENCODING, float_format=FLOAT_FORMAT)
    logger.info(f"데이터 저장 완료: {path}")
    return path


def write_snapshot(path: Path, grid: Grid, t: float, fields: Dict[str, Field]) -> Path:
    """격자 정보를 주석 헤더로 두고 노드별 좌표와 필드 값을 기록"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = {name: coords.ravel() for name, coords in zip(COORDINATE_COLUMNS, grid.coordinates())}
    columns.update({name: f.flat for name, f in fields.items()})
    header = (f"# dim={grid.dim} extents={','.join(repr(e) for e in grid.extents)} "
              f"nodes={','.join(str(n) for n in grid.nodes)} t={t!r}\n")
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(header)
        pd.DataFrame(columns).to_csv(handle, index=False, float_format=FLOAT_FORMAT)
    return path


def _parse_header(line: str) -> Tuple[Grid, float]:
    try:
        items = dict(token.split('=', 1) for token in line.lstrip('#').split())
        extents = tuple(float(e) for e in items['extents'].split(','))
        nodes = tuple(int(n) for n in items['nodes'].split(','))
        return Grid(extents, nodes), float(items.get('t', 'nan'))
    except (KeyError, ValueError) as e:
        raise GridMismatchError(f"스냅샷 헤더를 해석할 수 없습니다: {line.strip()} ({e})")


def read_snapshot(path: Path) -> Tuple[Grid, float, Dict[str, Field]]:
    """(격자, 시각, 필드 사전)"""
    path = Path(path)
    try:
        with open(path, encoding='utf-8') as handle:
            grid, t = _parse_header(handle.readline())
        df = pd.read_csv(path, skiprows=1)
    except FileNotFoundError as e:
        logger.error(f"스냅샷 파일을 찾을 수 없습니다: {e}")
        raise
    fields = {name: Field(grid, df[name].to_numpy())
              for name in df.columns if name not in COORDINATE_COLUMNS}
    return grid, t, fields


def read_field(path: Path, column: str) -> Field:
    """스냅샷 파일에서 한 열을 필드로 읽기"""
    _, _, fields = read_snapshot(path)
    if column not in fields:
        raise GridMismatchError(f"{path}에 '{column}' 열이 없습니다 (열: {sorted(fields)})")
    return fields[column]


def write_events(path: Path, events: Dict[str, object]) -> Path:
    """key=value 텍스트"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={_format_value(value)}" for key, value in events.items()]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


def read_events(path: Path) -> Dict[str, object]:
    events = {}
    for line in Path(path).read_text(encoding='utf-8').splitlines():
        if not line.strip() or '=' not in line:
            continue
        key, value = line.split('=', 1)
        value = value.strip()
        if value == 'none':
            events[key.strip()] = None
            continue
        try:
            events[key.strip()] = float(value)
        except ValueError:
            events[key.strip()] = value
    return events


def save_trajectory(trajectory, output_dir: Path) -> List[Path]:
    """장부, 이벤트, 스냅샷을 output_dir 아래에 기록하고 경로 목록 반환"""
    output_dir = Path(output_dir)
    artifacts = [
        save_table(trajectory.ledger_frame(), output_dir / LEDGER_FILE),
        write_events(output_dir / EVENTS_FILE, trajectory.events),
    ]
    for snapshot in trajectory.snapshots:
        artifacts.append(write_snapshot(
            output_dir / SNAPSHOT_DIR / f"snapshot_{snapshot.step:06d}.csv", trajectory.grid,
            snapshot.t, {'z': snapshot.z, 'u': snapshot.u, 'xi': snapshot.xi}))
    logger.info(f"궤적 저장 완료: {output_dir} (스냅샷 {len(trajectory.snapshots)}개)")
    return artifacts


def load_trajectory(output_dir: Path):
    """(장부 DataFrame, 이벤트, [(시각, 필드 사전)]) 읽기"""
    output_dir = Path(output_dir)
    ledger_path = output_dir / LEDGER_FILE
    if not ledger_path.exists():
        raise InvariantViolation(f"장부 파일이 없습니다: {ledger_path}")
    ledger = pd.read_csv(ledger_path, encoding=CSV_ENCODING)
    events_path = output_dir / EVENTS_FILE
    events = read_events(events_path) if events_path.exists() else {}
    snapshots = []
    for path in sorted((output_dir / SNAPSHOT_DIR).glob('snapshot_*.csv')):
        _, t, fields = read_snapshot(path)
        snapshots.append((t, fields))
    return ledger, events, snapshots


def write_manifest(output_dir: Path, artifacts: List[Path]) -> Path:
    """출력 디렉터리의 산출물 목록 (상대 경로, 정렬)"""
    output_dir = Path(output_dir)
    names = sorted({str(Path(p).resolve().relative_to(output_dir.resolve())) for p in artifacts})
    path = output_dir / MANIFEST_FILE
    path.write_text('\n'.join(names + [MANIFEST_FILE]) + '\n', encoding='utf-8')
    return path
