//! Straight transcription of the 1-up-3-down rules with the default
//! schedule, written without reference to the library implementation.

#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    pub scale: f64,
    pub counter: u8,
    /// 0 = no step yet, 1 = last step up, -1 = last step down.
    pub dir: i8,
    pub reversals: Vec<f64>,
    pub trials: usize,
    /// Index of the first response offered after termination, if any.
    pub rejected_at: Option<usize>,
}

pub fn run_oracle(responses: &[bool]) -> OracleState {
    let mut scale = 1.50_f64;
    let mut counter = 0u8;
    let mut dir = 0i8;
    let mut reversals: Vec<f64> = Vec::new();
    let mut trials = 0;
    let mut rejected_at = None;

    for (i, &correct) in responses.iter().enumerate() {
        if reversals.len() >= 10 {
            rejected_at = Some(i);
            break;
        }
        let up = if reversals.len() < 2 { 0.10 } else { 0.05 };
        let down = if reversals.len() < 2 { 0.0732 } else { 0.0366 };
        trials += 1;
        if correct {
            counter += 1;
            if counter == 3 {
                if dir == 1 {
                    reversals.push(scale);
                }
                scale -= down;
                if scale < 1.0 {
                    scale = 1.0;
                }
                counter = 0;
                dir = -1;
            }
        } else {
            if dir == -1 {
                reversals.push(scale);
            }
            scale += up;
            if scale < 1.0 {
                scale = 1.0;
            }
            counter = 0;
            dir = 1;
        }
    }
    OracleState {
        scale,
        counter,
        dir,
        reversals,
        trials,
        rejected_at,
    }
}

/// Mean of the last eight reversal scales minus one, in percent.
pub fn oracle_jnd(reversals: &[f64]) -> Option<f64> {
    if reversals.len() < 10 {
        return None;
    }
    let last: f64 = reversals[reversals.len() - 8..].iter().sum();
    Some((last / 8.0 - 1.0) * 100.0)
}
