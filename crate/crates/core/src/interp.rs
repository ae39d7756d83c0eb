use ndarray::ArrayView2;

/// Image center along one axis, split into an integer anchor and a
/// fractional part in `{0, 0.5}`.
///
/// Sample positions are formed as `anchor + (frac + offset)`: the offset is
/// combined with the fraction before the integer anchor is added, so
/// padding an image by whole pixels only changes the integer part and the
/// interpolation weights stay bit-identical.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisCenter {
    anchor: isize,
    frac: f64,
}

impl AxisCenter {
    /// Center of an axis with `len` samples, `(len - 1) / 2`.
    pub(crate) fn of_len(len: usize) -> Self {
        let twice = len as isize - 1;
        Self {
            anchor: twice.div_euclid(2),
            frac: if twice.rem_euclid(2) == 1 { 0.5 } else { 0.0 },
        }
    }

    /// Integer cell index and fractional weight of `center + offset`.
    #[inline]
    pub(crate) fn locate(self, offset: f64) -> (isize, f64) {
        let local = self.frac + offset;
        let floor = local.floor();
        (self.anchor + floor as isize, local - floor)
    }

    pub(crate) fn value(self) -> f64 {
        self.anchor as f64 + self.frac
    }
}

/// Bilinear interpolation at cell `(row, col)` with fractional weights.
/// Neighbours outside the grid read as `fill`.
#[inline]
pub(crate) fn bilinear(
    img: &ArrayView2<'_, f64>,
    (row, fy): (isize, f64),
    (col, fx): (isize, f64),
    fill: f64,
) -> f64 {
    let (rows, cols) = img.dim();
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r as usize >= rows || c as usize >= cols {
            fill
        } else {
            img[[r as usize, c as usize]]
        }
    };
    let v00 = at(row, col);
    let v01 = at(row, col + 1);
    let v10 = at(row + 1, col);
    let v11 = at(row + 1, col + 1);
    let top = v00 * (1.0 - fx) + v01 * fx;
    let bottom = v10 * (1.0 - fx) + v11 * fx;
    top * (1.0 - fy) + bottom * fy
}
