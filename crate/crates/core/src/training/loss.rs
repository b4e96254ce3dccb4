//! Soft Dice and focal losses with gradients with respect to the logits.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Result};
use crate::network::sigmoid;
use crate::types::SegMask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub dice_smooth: f64,
    pub focal_gamma: f64,
    /// Probabilities are clamped to `[delta, 1 - delta]` inside the focal term.
    pub focal_delta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            dice_smooth: 1e-6,
            focal_gamma: 20.0,
            focal_delta: 1e-7,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub dice: f64,
    pub focal: f64,
}

impl LossValue {
    pub fn add(&mut self, other: &LossValue) {
        self.total += other.total;
        self.dice += other.dice;
        self.focal += other.focal;
    }

    pub fn scaled(&self, s: f64) -> LossValue {
        LossValue {
            total: self.total * s,
            dice: self.dice * s,
            focal: self.focal * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.dice.is_finite() && self.focal.is_finite()
    }
}

/// `1 - (2 Σ p y + ε) / (Σ p + Σ y + ε)`.
pub fn soft_dice(pred: &[f64], truth: &[f64], smooth: f64) -> f64 {
    let (num, den) = dice_terms(pred, truth, smooth);
    1.0 - num / den
}

fn dice_terms(pred: &[f64], truth: &[f64], smooth: f64) -> (f64, f64) {
    let mut inter = 0.0;
    let mut sp = 0.0;
    let mut sy = 0.0;
    for (&p, &y) in pred.iter().zip(truth) {
        inter += p * y;
        sp += p;
        sy += y;
    }
    (2.0 * inter + smooth, sp + sy + smooth)
}

fn focal_term(p: f64, y: f64, gamma: f64, delta: f64) -> f64 {
    let p = p.clamp(delta, 1.0 - delta);
    let pt = if y >= 0.5 { p } else { 1.0 - p };
    -(1.0 - pt).powf(gamma) * pt.ln()
}

/// Mean over pixels of `-(1 - p_t)^γ log p_t`.
pub fn focal(pred: &[f64], truth: &[f64], gamma: f64, delta: f64) -> f64 {
    let sum: f64 = pred.iter().zip(truth).map(|(&p, &y)| focal_term(p, y, gamma, delta)).sum();
    sum / pred.len() as f64
}

pub fn soft_dice_loss(pred: &SegMask, truth: &SegMask, smooth: f64) -> Result<f64> {
    ensure_shape(truth.shape(), pred.shape())?;
    Ok(soft_dice(&widen(pred.pixels()), &widen(truth.pixels()), smooth))
}

pub fn focal_loss(pred: &SegMask, truth: &SegMask, gamma: f64, delta: f64) -> Result<f64> {
    ensure_shape(truth.shape(), pred.shape())?;
    Ok(focal(&widen(pred.pixels()), &widen(truth.pixels()), gamma, delta))
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Soft Dice plus focal loss of `sigmoid(logits)` and its gradient with
/// respect to the logits.
pub fn segmentation_loss<L: Copy + Into<f64>>(logits: &[L], truth: &[f32], cfg: &LossConfig) -> (LossValue, Vec<f64>) {
    assert_eq!(logits.len(), truth.len(), "logit and label sizes");
    let n = logits.len() as f64;
    let p: Vec<f64> = logits.iter().map(|&l| sigmoid(l.into())).collect();
    let y = widen(truth);
    let (num, den) = dice_terms(&p, &y, cfg.dice_smooth);
    let dice = 1.0 - num / den;
    let focal_value = focal(&p, &y, cfg.focal_gamma, cfg.focal_delta);
    let (g, delta) = (cfg.focal_gamma, cfg.focal_delta);
    let grads = p
        .iter()
        .zip(&y)
        .map(|(&pi, &yi)| {
            let d_dice = -(2.0 * yi * den - num) / (den * den);
            let d_focal = if pi < delta || pi > 1.0 - delta {
                0.0
            } else if yi >= 0.5 {
                let q = 1.0 - pi;
                let pow_term = if g > 0.0 { g * q.powf(g - 1.0) * pi.ln() } else { 0.0 };
                pow_term - q.powf(g) / pi
            } else {
                let q = 1.0 - pi;
                let pow_term = if g > 0.0 { -g * pi.powf(g - 1.0) * q.ln() } else { 0.0 };
                pow_term + pi.powf(g) / q
            };
            (d_dice + d_focal / n) * pi * (1.0 - pi)
        })
        .collect();
    (
        LossValue {
            total: dice + focal_value,
            dice,
            focal: focal_value,
        },
        grads,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dice_half_case() {
        let loss = soft_dice(&[0.5; 4], &[1.0, 1.0, 0.0, 0.0], 0.0);
        assert!((loss - 0.5).abs() < 1e-9);
        assert!(soft_dice(&[1.0, 0.0], &[1.0, 0.0], 1e-6) < 1e-6);
        assert_eq!(soft_dice(&[0.0; 3], &[0.0; 3], 1e-6), 0.0);
    }

    #[test]
    fn focal_closed_form() {
        let want = 0.5f64.powi(20) * std::f64::consts::LN_2;
        assert!((focal(&[0.5], &[1.0], 20.0, 1e-7) - want).abs() < 1e-9);
        assert!(focal(&[1.0, 0.0], &[1.0, 0.0], 20.0, 1e-7) < 1e-5);
    }

    #[test]
    fn focal_without_focusing_is_cross_entropy() {
        let p = [0.1, 0.35, 0.8, 0.99, 0.5];
        let y = [0.0, 1.0, 1.0, 0.0, 1.0];
        let bce: f64 = p.iter().zip(&y).map(|(&p, &y): (&f64, &f64)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())).sum::<f64>() / 5.0;
        assert!((focal(&p, &y, 0.0, 1e-7) - bce).abs() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits: Vec<f32> = vec![-2.0, -0.3, 0.1, 0.7, 1.5, -1.1];
        let truth = vec![0.0f32, 1.0, 1.0, 0.0, 1.0, 0.0];
        for gamma in [0.0, 2.0, 20.0] {
            let cfg = LossConfig {
                focal_gamma: gamma,
                ..LossConfig::default()
            };
            let (_, g) = segmentation_loss(&logits, &truth, &cfg);
            let eval = |l: &[f64]| {
                let p: Vec<f64> = l.iter().map(|&x| sigmoid(x)).collect();
                let y = widen(&truth);
                soft_dice(&p, &y, cfg.dice_smooth) + focal(&p, &y, gamma, cfg.focal_delta)
            };
            let base: Vec<f64> = logits.iter().map(|&x| x as f64).collect();
            for i in 0..base.len() {
                let h = 1e-5;
                let mut up = base.clone();
                up[i] += h;
                let mut down = base.clone();
                down[i] -= h;
                let numeric = (eval(&up) - eval(&down)) / (2.0 * h);
                assert!((numeric - g[i]).abs() < 1e-7 + 1e-5 * numeric.abs(), "gamma {gamma} i {i}: {numeric} vs {}", g[i]);
            }
        }
    }
}
