use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridDomain {
    LinearPower,
    LogMel,
}

/// Real matrix with rows = frequency/mel bins and columns = frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeFreqGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
    /// Center frequency of each row in Hz.
    pub row_hz: Vec<f64>,
    pub hop_s: f64,
    pub domain: GridDomain,
}

impl TimeFreqGrid {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Center-crop or pad (with the grid minimum) to exactly `cols` frames.
    pub fn fit_frames(&self, cols: usize) -> TimeFreqGrid {
        let fill = if self.values.is_empty() { 0.0 } else { self.min_value() };
        let mut values = vec![fill; self.rows * cols];
        if self.cols >= cols {
            let off = (self.cols - cols) / 2;
            for r in 0..self.rows {
                for c in 0..cols {
                    values[r * cols + c] = self.get(r, c + off);
                }
            }
        } else {
            let off = (cols - self.cols) / 2;
            for r in 0..self.rows {
                for c in 0..self.cols {
                    values[r * cols + c + off] = self.get(r, c);
                }
            }
        }
        TimeFreqGrid {
            rows: self.rows,
            cols,
            values,
            row_hz: self.row_hz.clone(),
            hop_s: self.hop_s,
            domain: self.domain,
        }
    }
}
