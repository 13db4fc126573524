"""
Tests for the two-phase simplex LP oracle
"""

import os
import sys

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.error_handler import ContractViolation, DomainError
from core.lp_oracle import LinearProgram, LPStatus, lp_oracle


class TestLinearProgram:
    """Test cases for LinearProgram"""

    def test_textbook_inequalities(self):
        """Test a two-variable problem with a known optimum"""
        result = lp_oracle([1.0, 1.0], a_ub=[[1.0, 2.0], [3.0, 1.0]], b_ub=[4.0, 6.0])
        assert result.status == LPStatus.OPTIMAL
        assert np.allclose(result.x, [1.6, 1.2])
        assert result.objective == pytest.approx(2.8)

    def test_simplex_vertex(self):
        """Test that maximizing over the probability simplex picks the best coordinate"""
        result = lp_oracle([0.2, 0.9, 0.4], a_eq=np.ones((1, 3)), b_eq=[1.0])
        assert np.allclose(result.x, [0.0, 1.0, 0.0])

    def test_ties_go_to_lowest_index(self):
        """Test deterministic tie-breaking"""
        result = lp_oracle([1.0, 1.0, 0.0], a_eq=np.ones((1, 3)), b_eq=[1.0])
        assert np.allclose(result.x, [1.0, 0.0, 0.0])

    def test_infeasible(self):
        """Test that contradictory constraints report INFEASIBLE"""
        result = lp_oracle([1.0, 0.0], a_eq=[[1.0, 1.0]], b_eq=[1.0],
                           a_ub=[[1.0, 1.0]], b_ub=[0.5])
        assert result.status == LPStatus.INFEASIBLE
        assert result.x is None

    def test_unbounded(self):
        """Test that an unbounded objective raises ContractViolation"""
        with pytest.raises(ContractViolation):
            lp_oracle([1.0, 0.0], a_ub=[[1.0, -1.0]], b_ub=[1.0])

    def test_redundant_equalities(self):
        """Test that duplicated equality rows are dropped"""
        a_eq = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
        result = lp_oracle([0.0, 0.0, 1.0], a_eq=a_eq, b_eq=[1.0, 2.0])
        assert result.status == LPStatus.OPTIMAL
        assert np.allclose(result.x, [0.0, 0.0, 1.0])

    def test_negative_right_hand_side(self):
        """Test rows with b < 0 that need an artificial start"""
        # x + y >= 1 written as -x - y <= -1
        result = LinearProgram(2, a_eq=None, b_eq=None, a_ub=[[-1.0, -1.0], [1.0, 0.0],
                                                               [0.0, 1.0]],
                               b_ub=[-1.0, 0.7, 0.7]).minimize(np.array([1.0, 2.0]))
        assert result.status == LPStatus.OPTIMAL
        assert np.allclose(result.x, [0.7, 0.3])
        assert result.objective == pytest.approx(1.3)

    def test_warm_start_matches_cold_solves(self):
        """Test that reusing one program across objectives gives the cold-start optima"""
        rng = np.random.default_rng(0)
        a_ub = rng.uniform(0.1, 1.0, size=(4, 6))
        b_ub = np.ones(4)
        program = LinearProgram(6, a_eq=None, b_eq=None, a_ub=a_ub, b_ub=b_ub)
        for _ in range(10):
            c = rng.normal(size=6)
            warm = program.maximize(c)
            cold = lp_oracle(c, a_ub=a_ub, b_ub=b_ub)
            assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
            assert np.all(a_ub @ warm.x <= b_ub + 1e-9)

    def test_shape_validation(self):
        """Test rejection of mismatched shapes"""
        with pytest.raises(DomainError):
            LinearProgram(2, a_eq=[[1.0, 1.0, 1.0]], b_eq=[1.0])
        program = LinearProgram(2, a_eq=[[1.0, 1.0]], b_eq=[1.0])
        with pytest.raises(DomainError):
            program.maximize(np.ones(3))

    def test_no_constraints(self):
        """Test that a program without constraints is rejected"""
        with pytest.raises(DomainError):
            LinearProgram(2)
