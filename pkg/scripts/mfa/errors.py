"""
Trace lab 예외 정의.

CLI 종료 코드:
- 0: 통과
- 1: 비교 실패 (허용 오차 밖)
- 2: 설정 오류
- 3: 전제 조건 실패
"""


class TraceLabError(Exception):
    """모든 trace lab 예외의 기반 클래스."""

    exit_code: int = 1


class ConfigError(TraceLabError, ValueError):
    """설정 파일/모델 정의 오류."""

    exit_code = 2


class DomainError(TraceLabError, ValueError):
    """좌표나 인덱스가 [0,1)^D 또는 Λ_j 밖에 있음."""

    exit_code = 2


class ShapeMismatchError(TraceLabError, ValueError):
    """계수장 차원/레벨 불일치."""

    exit_code = 2


class ConstructionError(TraceLabError):
    """모델 또는 웨이블릿 생성 실패."""

    exit_code = 3


class SamplingError(TraceLabError):
    """질량 0인 노드를 만나 샘플링 불가."""

    exit_code = 3


class PreconditionError(TraceLabError):
    """전제 조건 위반 (property (R), s₁ 경계, 스케줄 길이 등)."""

    exit_code = 3


class ComparisonFailure(TraceLabError):
    """예측값과 추정값의 차이가 허용 오차를 넘음."""

    exit_code = 1
