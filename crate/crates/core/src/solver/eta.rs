//! Product-form basis inverse: `B^-1 = E_k ... E_1`, each `E` an identity
//! matrix with one replaced column.

#[derive(Debug, Clone)]
struct Eta {
    row: usize,
    /// Reciprocal of the pivot element.
    piv: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EtaFile {
    etas: Vec<Eta>,
}

const DROP: f64 = 1e-14;

impl EtaFile {
    pub fn clear(&mut self) {
        self.etas.clear();
    }

    pub fn len(&self) -> usize {
        self.etas.len()
    }

    /// Append the eta that pivots the transformed column `col` into `row`.
    pub fn push(&mut self, row: usize, col: &[f64]) {
        let piv = 1.0 / col[row];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &v) in col.iter().enumerate() {
            if i != row && v.abs() > DROP {
                idx.push(i);
                val.push(-v * piv);
            }
        }
        self.etas.push(Eta { row, piv, idx, val });
    }

    /// `v <- B^-1 v`.
    pub fn ftran(&self, v: &mut [f64]) {
        for e in &self.etas {
            let vr = v[e.row];
            if vr != 0.0 {
                v[e.row] = vr * e.piv;
                for (&i, &a) in e.idx.iter().zip(&e.val) {
                    v[i] += a * vr;
                }
            }
        }
    }

    /// `v^T <- v^T B^-1`.
    pub fn btran(&self, v: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let mut s = v[e.row] * e.piv;
            for (&i, &a) in e.idx.iter().zip(&e.val) {
                s += a * v[i];
            }
            v[e.row] = s;
        }
    }
}
