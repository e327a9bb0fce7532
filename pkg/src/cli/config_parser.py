"""
INI 설정 파일 파싱과 직렬화
섹션: grid, potential, truncation, time, solver, experiment (기본값은 config.py)
"""

import configparser
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Dict, Optional, Sequence

sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
from config import CONFIG_SECTIONS
from src.errors import ConfigParseError, GridMismatchError
from src.models.damage_model import DamageSimulator, SimConfig, build_initial_damage

logger = logging.getLogger(__name__)

AUTO = 'auto'


def parse_float(text: str) -> float:
    """'1/12', '1e-3', 'inf' 형식의 실수"""
    text = text.strip()
    try:
        if '/' in text:
            numerator, denominator = text.split('/', 1)
            return float(numerator) / float(denominator)
        return float(text)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigParseError(f"실수로 해석할 수 없습니다: '{text}' ({e})")


def _convert(key: str, text: str):
    default = _defaults()[key][1]
    if key == 'c_omega':
        return None if text.strip().lower() == AUTO else parse_float(text)
    if isinstance(default, tuple):
        return tuple(parse_float(item) for item in text.split(',') if item.strip())
    if isinstance(default, int):
        try:
            return int(text.strip())
        except ValueError as e:
            raise ConfigParseError(f"{key}: 정수로 해석할 수 없습니다: '{text}' ({e})")
    if isinstance(default, float):
        return parse_float(text)
    return text.strip()


def _defaults() -> Dict[str, tuple]:
    """키 -> (섹션, 기본값)"""
    return {key: (section, value) for section, values in CONFIG_SECTIONS.items()
            for key, value in values.items()}


def _resolve_key(name: str) -> str:
    defaults = _defaults()
    if '.' in name:
        section, key = name.split('.', 1)
        if key not in defaults or defaults[key][0] != section:
            raise ConfigParseError(f"알 수 없는 설정 키: {name}")
        return key
    if name not in defaults:
        raise ConfigParseError(f"알 수 없는 설정 키: {name}")
    return name


def parse_overrides(overrides: Sequence[str]) -> Dict[str, str]:
    """'key=value' 또는 'section.key=value' 목록"""
    parsed = {}
    for item in overrides or []:
        if '=' not in item:
            raise ConfigParseError(f"오버라이드 형식은 key=value 입니다: '{item}'")
        name, value = item.split('=', 1)
        parsed[_resolve_key(name.strip())] = value
    return parsed


def config_from_text(text: str, overrides: Optional[Sequence[str]] = None) -> SimConfig:
    """INI 텍스트와 오버라이드로 SimConfig 생성 (오버라이드가 우선)"""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigParseError(f"설정 파일 형식 오류: {e}")
    raw = {}
    for section in parser.sections():
        if section not in CONFIG_SECTIONS:
            raise ConfigParseError(f"알 수 없는 섹션: [{section}]")
        for key, value in parser.items(section):
            raw[_resolve_key(f"{section}.{key}")] = value
    raw.update(parse_overrides(overrides))
    values = {key: _convert(key, value) for key, value in raw.items()}
    try:
        return SimConfig(**values)
    except GridMismatchError as e:
        raise ConfigParseError(f"격자 설정 오류: {e}")


def parse_config(path, overrides: Optional[Sequence[str]] = None, check_a3: bool = True) -> SimConfig:
    """설정 파일을 읽고 (A1)-(A3)를 검사한 SimConfig 반환

    Args:
        path: INI 설정 파일 경로
        overrides (list): 'key=value' 목록
        check_a3 (bool): 초기 손상에 대해 c_Ω‖1 - z₀‖_W ≤ 1/2 검사
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        logger.error(f"설정 파일을 읽을 수 없습니다: {e}")
        raise ConfigParseError(f"설정 파일을 읽을 수 없습니다: {path} ({e})")
    cfg = config_from_text(text, overrides)
    if check_a3:
        try:
            z0 = build_initial_damage(cfg)
        except (OSError, GridMismatchError) as e:
            raise ConfigParseError(f"초기 손상 파일 오류: {e}")
        DamageSimulator(cfg).check_initial_assumptions(z0)
    logger.info(f"설정 로드 완료: {path}")
    return cfg


def _format(value) -> str:
    if value is None:
        return AUTO
    if isinstance(value, tuple):
        return ', '.join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: SimConfig) -> str:
    """모든 필드를 기록한 INI 텍스트 (parse_config로 같은 설정을 복원)"""
    sections = {section: {} for section in CONFIG_SECTIONS}
    defaults = _defaults()
    for f in fields(cfg):
        section = defaults[f.name][0]
        sections[section][f.name] = _format(getattr(cfg, f.name))
    lines = []
    for section, values in sections.items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in values.items())
        lines.append('')
    return '\n'.join(lines)


def write_config(cfg: SimConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_config(cfg), encoding='utf-8')
    return path
