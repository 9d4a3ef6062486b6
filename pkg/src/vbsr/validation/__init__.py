"""Exact posterior-mean oracle for small problems"""

from .exact import AgreementReport, OracleResult, compare_with_oracle, exact_pm_oracle

__all__ = ["AgreementReport", "OracleResult", "compare_with_oracle", "exact_pm_oracle"]
