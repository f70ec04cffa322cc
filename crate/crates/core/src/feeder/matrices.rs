//! Three-phase LinDistFlow voltage-drop sensitivity matrices.
//!
//! For a branch with series impedance block (r, x), the squared-voltage
//! drop across the branch is `U_to = U_from + MP * P + MQ * Q` (when the
//! branch is closed), where MP and MQ mix self and mutual terms:
//!
//! - diagonal: `MP[p][p] = -2 r_pp`, `MQ[p][p] = -2 x_pp`
//! - off-diagonal, cyclic pair (a->b, b->c, c->a):
//!   `MP = r - sqrt(3) x`, `MQ = x + sqrt(3) r`
//! - off-diagonal, anti-cyclic pair: `MP = r + sqrt(3) x`,
//!   `MQ = x - sqrt(3) r`
//!
//! Rows and columns of phases absent from the branch are zero.

use super::types::{Branch, Phase};

const SQRT3: f64 = 1.732050807568877293527446341505872367_f64;

/// True when `to` is the cyclic successor of `from` (a->b, b->c, c->a).
fn cyclic(from: Phase, to: Phase) -> bool {
    matches!(
        (from, to),
        (Phase::A, Phase::B) | (Phase::B, Phase::C) | (Phase::C, Phase::A)
    )
}

/// Compute the (MP, MQ) sensitivity pair for a branch.
pub fn phase_impedance_matrices(branch: &Branch) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let mut mp = [[0.0; 3]; 3];
    let mut mq = [[0.0; 3]; 3];
    let z = &branch.impedance;
    for p in branch.phases.iter() {
        for q in branch.phases.iter() {
            let (i, j) = (p.index(), q.index());
            let (r, x) = (z.r[i][j], z.x[i][j]);
            if i == j {
                mp[i][j] = -2.0 * r;
                mq[i][j] = -2.0 * x;
            } else if cyclic(p, q) {
                mp[i][j] = r - SQRT3 * x;
                mq[i][j] = x + SQRT3 * r;
            } else {
                mp[i][j] = r + SQRT3 * x;
                mq[i][j] = x - SQRT3 * r;
            }
        }
    }
    (mp, mq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::types::{Impedance, PhaseSet};

    fn branch_with(z: Impedance, phases: PhaseSet) -> Branch {
        Branch {
            from: 0,
            to: 1,
            phases,
            impedance: z,
            s_max: 1.0,
            switchable: false,
            oltc: None,
            initial_closed: true,
        }
    }

    #[test]
    fn diagonal_impedance_gives_diagonal_matrices() {
        let mut z = Impedance::default();
        z.r[0][0] = 0.1;
        z.r[1][1] = 0.2;
        z.r[2][2] = 0.3;
        z.x[0][0] = 0.4;
        z.x[1][1] = 0.5;
        z.x[2][2] = 0.6;
        let b = branch_with(z, PhaseSet::ABC);
        let (mp, mq) = phase_impedance_matrices(&b);
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert_eq!(mp[i][j], -2.0 * z.r[i][i]);
                    assert_eq!(mq[i][j], -2.0 * z.x[i][i]);
                } else {
                    assert_eq!(mp[i][j], 0.0);
                    assert_eq!(mq[i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn mutual_ab_term() {
        let mut z = Impedance::default();
        z.r[0][1] = 1.0;
        z.x[0][1] = 1.0;
        let b = branch_with(z, PhaseSet::ABC);
        let (mp, mq) = phase_impedance_matrices(&b);
        assert!((mp[0][1] - (1.0 - SQRT3)).abs() < 1e-15);
        assert!((mq[0][1] - (1.0 + SQRT3)).abs() < 1e-15);
    }

    /// Element-by-element transcription of the drop formula, written
    /// independently of the implementation above.
    fn oracle(z: &Impedance, present: &[bool; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
        let s3 = 3.0f64.sqrt();
        // sign[i][j] multiplies sqrt(3): -1 on the cyclic pairs for MP.
        let sign = [[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]];
        let mut mp = [[0.0; 3]; 3];
        let mut mq = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                if !(present[i] && present[j]) {
                    continue;
                }
                if i == j {
                    mp[i][j] = -2.0 * z.r[i][j];
                    mq[i][j] = -2.0 * z.x[i][j];
                } else {
                    mp[i][j] = z.r[i][j] + sign[i][j] * s3 * z.x[i][j];
                    mq[i][j] = z.x[i][j] - sign[i][j] * s3 * z.r[i][j];
                }
            }
        }
        (mp, mq)
    }

    #[test]
    fn random_branch_matches_transcription_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let mut z = Impedance::default();
            let mask: u8 = rng.gen_range(1..8);
            let phases = PhaseSet::parse(
                &"abc"
                    .chars()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, c)| c)
                    .collect::<String>(),
            )
            .unwrap();
            let mut present = [false; 3];
            for p in phases.iter() {
                present[p.index()] = true;
            }
            for i in 0..3 {
                for j in 0..3 {
                    if present[i] && present[j] {
                        z.r[i][j] = rng.gen_range(-1.0..1.0);
                        z.x[i][j] = rng.gen_range(-1.0..1.0);
                    }
                }
            }
            let b = branch_with(z, phases);
            let (mp, mq) = phase_impedance_matrices(&b);
            let (emp, emq) = oracle(&z, &present);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((mp[i][j] - emp[i][j]).abs() < 1e-14);
                    assert!((mq[i][j] - emq[i][j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn absent_phases_zeroed() {
        let mut z = Impedance::default();
        z.r[0][0] = 0.5;
        z.x[0][0] = 0.5;
        let b = branch_with(z, PhaseSet::parse("a").unwrap());
        let (mp, mq) = phase_impedance_matrices(&b);
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (0, 0) {
                    assert_eq!(mp[i][j], 0.0);
                    assert_eq!(mq[i][j], 0.0);
                }
            }
        }
    }
}
