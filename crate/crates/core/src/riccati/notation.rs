//! Pointwise building blocks of the equilibrium Riccati system: the
//! follower's best response, the reduced leader coefficients, the leader's
//! equilibrium gain and the right-hand sides of both matrix equations.
//!
//! Every right-hand side here is returned as `−Ṗ`, i.e. the equations read
//! `Ṗ = −rhs(P)` and a backward step is `P(t − dt) ≈ P(t) + dt·rhs`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{spd_inverse, symmetrize, Mat};
use crate::model::Coefficients;

/// Which cost functional a value or weight refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    /// Leader (player 1).
    Player1,
    /// Follower (player 2).
    Player2,
}

impl Player {
    pub fn weights<'a>(&self, c: &'a Coefficients) -> (&'a Mat, &'a Mat) {
        match self {
            Player::Player1 => (&c.q1, &c.r1),
            Player::Player2 => (&c.q2, &c.r2),
        }
    }
}

/// The follower's pointwise response `v = state_gain·x + control_gain·u`,
/// obtained by minimizing the follower Hamiltonian for a given `P2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerResponse {
    /// `(R2 + D2ᵀP2D2)⁻¹`.
    pub inverse: Mat,
    /// `−(R2 + D2ᵀP2D2)⁻¹(B2ᵀP2 + D2ᵀP2C)`, shape m2×n.
    pub state_gain: Mat,
    /// `−(R2 + D2ᵀP2D2)⁻¹D2ᵀP2D1`, shape m2×m1.
    pub control_gain: Mat,
}

impl FollowerResponse {
    pub fn new(c: &Coefficients, p2: &Mat, node: usize) -> Result<Self> {
        let d2t_p2 = c.d2.transpose() * p2;
        let normal = &c.r2 + &d2t_p2 * &c.d2;
        let inverse = spd_inverse(&normal, "R2 + D2ᵀP2D2", node)?;
        let state_gain = -(&inverse * (c.b2.transpose() * p2 + &d2t_p2 * &c.c));
        let control_gain = -(&inverse * (&d2t_p2 * &c.d1));
        Ok(FollowerResponse {
            inverse,
            state_gain,
            control_gain,
        })
    }

    /// Best-response gain `Θ2*(Θ1)`.
    pub fn gain_for(&self, theta1: &Mat) -> Mat {
        &self.state_gain + &self.control_gain * theta1
    }
}

/// Reduced leader coefficients for a given `(Θ1, P2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NotationBlock {
    /// `𝐁(P2)`, n×m1.
    pub b_bold: Mat,
    /// `𝐃(P2)`, n×m1.
    pub d_bold: Mat,
    /// `𝐀(Θ1, P2)`, n×n.
    pub a_bold: Mat,
    /// `𝐂(Θ1, P2)`, n×n.
    pub c_bold: Mat,
    /// `(R2 + D2ᵀP2D2)⁻¹`.
    pub follower_inverse: Mat,
}

pub fn notation_block(c: &Coefficients, theta1: &Mat, p2: &Mat, node: usize) -> Result<NotationBlock> {
    let response = FollowerResponse::new(c, p2, node)?;
    Ok(notation_from_response(c, theta1, &response))
}

pub(crate) fn notation_from_response(
    c: &Coefficients,
    theta1: &Mat,
    response: &FollowerResponse,
) -> NotationBlock {
    let b_bold = &c.b1 + &c.b2 * &response.control_gain;
    let d_bold = &c.d1 + &c.d2 * &response.control_gain;
    let a_bold = &c.a + &c.b2 * &response.state_gain + &b_bold * theta1;
    let c_bold = &c.c + &c.d2 * &response.state_gain + &d_bold * theta1;
    NotationBlock {
        b_bold,
        d_bold,
        a_bold,
        c_bold,
        follower_inverse: response.inverse.clone(),
    }
}

/// Follower best response
/// `Θ2* = −(R2 + D2ᵀP2D2)⁻¹(B2ᵀP2 + D2ᵀP2(C + D1Θ1))`.
pub fn theta2_star(c: &Coefficients, theta1: &Mat, p2: &Mat, node: usize) -> Result<Mat> {
    let d2t_p2 = c.d2.transpose() * p2;
    let normal = &c.r2 + &d2t_p2 * &c.d2;
    let inverse = spd_inverse(&normal, "R2 + D2ᵀP2D2", node)?;
    let closed_c = &c.c + &c.d1 * theta1;
    Ok(-(inverse * (c.b2.transpose() * p2 + d2t_p2 * closed_c)))
}

/// Leader equilibrium gain: the unique solution of
/// `R1Θ + 𝐁ᵀP1 + 𝐃ᵀP1𝐂(Θ, P2) = 0`.
pub fn theta1_bar(c: &Coefficients, p1: &Mat, p2: &Mat, node: usize) -> Result<Mat> {
    let response = FollowerResponse::new(c, p2, node)?;
    theta1_bar_from_response(c, p1, &response, node)
}

pub(crate) fn theta1_bar_from_response(
    c: &Coefficients,
    p1: &Mat,
    response: &FollowerResponse,
    node: usize,
) -> Result<Mat> {
    let b_bold = &c.b1 + &c.b2 * &response.control_gain;
    let d_bold = &c.d1 + &c.d2 * &response.control_gain;
    let c_free = &c.c + &c.d2 * &response.state_gain;
    let dt_p1 = d_bold.transpose() * p1;
    let normal = &c.r1 + &dt_p1 * &d_bold;
    let inverse = spd_inverse(&normal, "R1 + 𝐃ᵀP1𝐃", node)?;
    Ok(-(inverse * (b_bold.transpose() * p1 + dt_p1 * c_free)))
}

/// `−Ṗ2` of the follower Riccati equation for a fixed leader gain.
pub fn rhs_p2(c: &Coefficients, theta1: &Mat, p2: &Mat, node: usize) -> Result<Mat> {
    let a = &c.a + &c.b1 * theta1;
    let cc = &c.c + &c.d1 * theta1;
    let d2t_p2 = c.d2.transpose() * p2;
    let normal = &c.r2 + &d2t_p2 * &c.d2;
    let inverse = spd_inverse(&normal, "R2 + D2ᵀP2D2", node)?;
    let cross = p2 * &c.b2 + cc.transpose() * d2t_p2.transpose();
    let value = a.transpose() * p2 + p2 * &a + cc.transpose() * p2 * &cc + &c.q2
        - &cross * inverse * cross.transpose();
    Ok(symmetrize(&value))
}

/// `−Ṗ1` of the decoupled leader equation,
/// `𝐀ᵀP1 + P1𝐀 + 𝐂ᵀP1𝐂 + Q1 + Θ1ᵀR1Θ1`.
pub fn rhs_p1(c: &Coefficients, theta1: &Mat, p1: &Mat, p2: &Mat, node: usize) -> Result<Mat> {
    let block = notation_block(c, theta1, p2, node)?;
    Ok(rhs_p1_from_block(c, theta1, p1, &block))
}

pub(crate) fn rhs_p1_from_block(c: &Coefficients, theta1: &Mat, p1: &Mat, block: &NotationBlock) -> Mat {
    let value = block.a_bold.transpose() * p1
        + p1 * &block.a_bold
        + block.c_bold.transpose() * p1 * &block.c_bold
        + &c.q1
        + theta1.transpose() * &c.r1 * theta1;
    symmetrize(&value)
}

/// Closed-loop Lyapunov right-hand side
/// `A_clᵀΠ + ΠA_cl + C_clᵀΠC_cl + Q_k + Θ_kᵀR_kΘ_k` for a fixed gain pair.
pub fn lyapunov_rhs(c: &Coefficients, theta1: &Mat, theta2: &Mat, pi: &Mat, player: Player) -> Mat {
    let a_cl = &c.a + &c.b1 * theta1 + &c.b2 * theta2;
    let c_cl = &c.c + &c.d1 * theta1 + &c.d2 * theta2;
    let (q, r) = player.weights(c);
    let own = match player {
        Player::Player1 => theta1,
        Player::Player2 => theta2,
    };
    let value = a_cl.transpose() * pi
        + pi * &a_cl
        + c_cl.transpose() * pi * &c_cl
        + q
        + own.transpose() * r * own;
    symmetrize(&value)
}
