//! Dense d-way tensors in row-major storage, axis slicing, and face vectorization.

use crate::error::{Error, Result};

/// A dense d-way array of `f64` with named axes, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
    axis_names: Vec<String>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>, axis_names: Vec<String>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Shape("a tensor needs at least one axis".into()));
        }
        if let Some(axis) = dims.iter().position(|&n| n == 0) {
            return Err(Error::Shape(format!("axis {axis} has length 0")));
        }
        if axis_names.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{} axis names for {} axes",
                axis_names.len(),
                dims.len()
            )));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} hold {expected} values but data has {}",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            data,
            axis_names,
        })
    }

    /// Builds a tensor with default axis names `axis0, axis1, ...`.
    pub fn from_vec(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let names = default_axis_names(dims.len());
        Self::new(dims, data, names)
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let total: usize = dims.iter().product();
        let mut data = Vec::with_capacity(total);
        let mut index = vec![0usize; dims.len()];
        for _ in 0..total {
            data.push(f(&index));
            increment(&mut index, &dims);
        }
        Self::from_vec(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn axis_names(&self) -> &[String] {
        &self.axis_names
    }

    pub fn with_axis_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dims.len() {
            return Err(Error::Shape(format!(
                "{} axis names for {} axes",
                names.len(),
                self.dims.len()
            )));
        }
        self.axis_names = names;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims)
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dims.len() {
            return Err(Error::Bounds(format!(
                "index of rank {} into tensor of rank {}",
                index.len(),
                self.dims.len()
            )));
        }
        let mut offset = 0;
        for (axis, (&i, &n)) in index.iter().zip(&self.dims).enumerate() {
            if i >= n {
                return Err(Error::Bounds(format!(
                    "index {i} on axis {axis} of length {n}"
                )));
            }
            offset = offset * n + i;
        }
        Ok(offset)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    /// Fixes `axis` at `value`, returning the (d-1)-way sub-tensor.
    ///
    /// Slicing a 1-way tensor yields a 1-way tensor of length one.
    pub fn slice_axis(&self, axis: usize, value: usize) -> Result<DenseTensor> {
        if axis >= self.ndim() {
            return Err(Error::Bounds(format!(
                "axis {axis} on a {}-way tensor",
                self.ndim()
            )));
        }
        if value >= self.dims[axis] {
            return Err(Error::Bounds(format!(
                "value {value} on axis {axis} of length {}",
                self.dims[axis]
            )));
        }
        let outer: usize = self.dims[..axis].iter().product();
        let n = self.dims[axis];
        let inner: usize = self.dims[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * n + value) * inner;
            data.extend_from_slice(&self.data[start..start + inner]);
        }
        let mut dims = self.dims.clone();
        let mut names = self.axis_names.clone();
        dims.remove(axis);
        names.remove(axis);
        if dims.is_empty() {
            dims.push(1);
            names.push(String::from("scalar"));
        }
        DenseTensor::new(dims, data, names)
    }

    /// Inverse of repeated [`slice_axis`](Self::slice_axis): inserts a new axis at
    /// position `axis` whose entries are `parts` in order.
    pub fn stack(parts: &[DenseTensor], axis: usize, axis_name: &str) -> Result<DenseTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero tensors".into()))?;
        check_same_dims(parts)?;
        if axis > first.ndim() {
            return Err(Error::Bounds(format!(
                "stack axis {axis} on {}-way parts",
                first.ndim()
            )));
        }
        let outer: usize = first.dims[..axis].iter().product();
        let inner: usize = first.dims[axis..].iter().product();
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for o in 0..outer {
            for part in parts {
                data.extend_from_slice(&part.data[o * inner..(o + 1) * inner]);
            }
        }
        let mut dims = first.dims.clone();
        let mut names = first.axis_names.clone();
        dims.insert(axis, parts.len());
        names.insert(axis, axis_name.to_string());
        DenseTensor::new(dims, data, names)
    }

    /// Applies `f` to every 1-D lane along `axis`, producing lanes of `out_len`.
    ///
    /// `f` receives the input lane and a zeroed output buffer.
    pub fn map_lanes<F>(&self, axis: usize, out_len: usize, mut f: F) -> Result<DenseTensor>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        if axis >= self.ndim() {
            return Err(Error::Bounds(format!(
                "axis {axis} on a {}-way tensor",
                self.ndim()
            )));
        }
        if out_len == 0 {
            return Err(Error::Shape("lanes cannot shrink to length 0".into()));
        }
        let outer: usize = self.dims[..axis].iter().product();
        let n = self.dims[axis];
        let inner: usize = self.dims[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * out_len * inner];
        let mut lane = vec![0.0; n];
        let mut result = vec![0.0; out_len];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for (j, slot) in lane.iter_mut().enumerate() {
                    *slot = self.data[base + j * inner];
                }
                result.iter_mut().for_each(|v| *v = 0.0);
                f(&lane, &mut result)?;
                let out_base = o * out_len * inner + i;
                for (j, &v) in result.iter().enumerate() {
                    out[out_base + j * inner] = v;
                }
            }
        }
        let mut dims = self.dims.clone();
        dims[axis] = out_len;
        DenseTensor::new(dims, out, self.axis_names.clone())
    }
}

/// Face cells as rows, every remaining coordinate of every part as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    face_dims: (usize, usize),
}

impl FaceMatrix {
    pub fn new(face_dims: (usize, usize), cols: usize, data: Vec<f64>) -> Result<Self> {
        let rows = face_dims.0 * face_dims.1;
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "face matrix needs positive extent, got {rows}x{cols}"
            )));
        }
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} face matrix given {} values",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            face_dims,
        })
    }

    /// A plain point set: `rows` points of dimension `cols`, face `(rows, 1)`.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new((rows, 1), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn face_dims(&self) -> (usize, usize) {
        self.face_dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Keeps only the rows whose index is set in `keep`, in order.
    pub fn select_rows(&self, keep: &[bool]) -> Result<FaceMatrix> {
        if keep.len() != self.rows {
            return Err(Error::Shape(format!(
                "row mask of length {} for {} rows",
                keep.len(),
                self.rows
            )));
        }
        let mut data = Vec::new();
        let mut count = 0;
        for (r, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            data.extend_from_slice(self.row(r));
            count += 1;
        }
        FaceMatrix::from_rows(count, self.cols, data)
    }
}

/// Stacks equally shaped parts along the face `face_axes` and vectorizes each face cell.
///
/// Row `r` corresponds to face cell `(r / N_b, r % N_b)` where `N_b` is the length of
/// `face_axes.1`. Within a row, parts appear in order and each part contributes its
/// non-face coordinates in row-major order.
pub fn stack_and_vectorize(parts: &[DenseTensor], face_axes: (usize, usize)) -> Result<FaceMatrix> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Shape("cannot vectorize zero parts".into()))?;
    check_same_dims(parts)?;
    let (a, b) = face_axes;
    let d = first.ndim();
    if a >= d || b >= d {
        return Err(Error::Bounds(format!(
            "face axes {face_axes:?} on {d}-way parts"
        )));
    }
    if a == b {
        return Err(Error::Parameter("face axes must be distinct".into()));
    }
    let dims = first.dims();
    let face_dims = (dims[a], dims[b]);
    let rest: Vec<usize> = (0..d).filter(|&ax| ax != a && ax != b).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&ax| dims[ax]).collect();
    let per_part: usize = rest_dims.iter().product();
    let strides = first.strides();
    let cols = per_part * parts.len();
    let rows = face_dims.0 * face_dims.1;

    // offsets of the non-face coordinates, shared by every face cell
    let mut rest_offsets = Vec::with_capacity(per_part);
    let mut index = vec![0usize; rest.len()];
    for _ in 0..per_part {
        let off: usize = index
            .iter()
            .zip(&rest)
            .map(|(&i, &ax)| i * strides[ax])
            .sum();
        rest_offsets.push(off);
        increment(&mut index, &rest_dims);
    }

    let mut data = Vec::with_capacity(rows * cols);
    for ia in 0..face_dims.0 {
        for ib in 0..face_dims.1 {
            let face_off = ia * strides[a] + ib * strides[b];
            for part in parts {
                data.extend(rest_offsets.iter().map(|&o| part.data[face_off + o]));
            }
        }
    }
    FaceMatrix::new(face_dims, cols, data)
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for axis in (0..dims.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * dims[axis + 1];
    }
    strides
}

pub(crate) fn default_axis_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("axis{i}")).collect()
}

fn increment(index: &mut [usize], dims: &[usize]) {
    for axis in (0..index.len()).rev() {
        index[axis] += 1;
        if index[axis] < dims[axis] {
            return;
        }
        index[axis] = 0;
    }
}

fn check_same_dims(parts: &[DenseTensor]) -> Result<()> {
    let first = &parts[0];
    for (i, part) in parts.iter().enumerate().skip(1) {
        if part.dims != first.dims {
            return Err(Error::Shape(format!(
                "part {i} has dims {:?}, expected {:?}",
                part.dims, first.dims
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iota(dims: Vec<usize>) -> DenseTensor {
        let n: usize = dims.iter().product();
        DenseTensor::from_vec(dims, (0..n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DenseTensor::from_vec(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(DenseTensor::from_vec(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::from_vec(vec![], vec![]).is_err());
    }

    #[test]
    fn slice_2x2_row() {
        let t = DenseTensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = t.slice_axis(0, 0).unwrap();
        assert_eq!(s.dims(), &[2]);
        assert_eq!(s.data(), &[1.0, 2.0]);
    }

    #[test]
    fn slice_last_axis_of_cube() {
        let s = iota(vec![2, 2, 2]).slice_axis(2, 1).unwrap();
        assert_eq!(s.dims(), &[2, 2]);
        assert_eq!(s.data(), &[1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn slice_out_of_range() {
        let t = iota(vec![2, 3]);
        assert!(matches!(t.slice_axis(2, 0), Err(Error::Bounds(_))));
        assert!(matches!(t.slice_axis(1, 3), Err(Error::Bounds(_))));
    }

    #[test]
    fn slice_keeps_names() {
        let t = iota(vec![2, 3, 4])
            .with_axis_names(vec!["lat".into(), "lon".into(), "time".into()])
            .unwrap();
        let s = t.slice_axis(1, 2).unwrap();
        assert_eq!(s.axis_names(), &["lat".to_string(), "time".to_string()]);
        assert_eq!(s.get(&[1, 3]).unwrap(), t.get(&[1, 2, 3]).unwrap());
    }

    #[test]
    fn vectorize_single_column() {
        let t = DenseTensor::from_vec(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = stack_and_vectorize(&[t], (0, 1)).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 1));
        assert_eq!(m.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn vectorize_three_parts() {
        let parts: Vec<_> = (0..3)
            .map(|p| {
                DenseTensor::from_fn(vec![2, 2, 3], |ix| {
                    (p * 100 + ix[0] * 10 + ix[1]) as f64 + 0.1 * ix[2] as f64
                })
                .unwrap()
            })
            .collect();
        let m = stack_and_vectorize(&parts, (0, 1)).unwrap();
        assert_eq!((m.rows(), m.cols()), (4, 9));
        assert_eq!(m.face_dims(), (2, 2));
        // face cell (1, 0), part 2, time 1
        let row = m.row(2);
        assert!((row[2 * 3 + 1] - 210.1).abs() < 1e-12);
        assert!((row[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn vectorize_non_leading_face() {
        // face on axes (2, 0): rows run over axis 2 then axis 0
        let t = iota(vec![2, 3, 2]);
        let m = stack_and_vectorize(std::slice::from_ref(&t), (2, 0)).unwrap();
        assert_eq!(m.face_dims(), (2, 2));
        assert_eq!(m.cols(), 3);
        assert_eq!(
            m.row(1),
            &[
                t.get(&[1, 0, 0]).unwrap(),
                t.get(&[1, 1, 0]).unwrap(),
                t.get(&[1, 2, 0]).unwrap()
            ]
        );
    }

    #[test]
    fn vectorize_shape_mismatch() {
        let a = iota(vec![2, 2, 3]);
        let b = iota(vec![2, 2, 2]);
        assert!(matches!(
            stack_and_vectorize(&[a, b], (0, 1)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn map_lanes_sums_middle_axis() {
        let t = iota(vec![2, 3, 2]);
        let s = t
            .map_lanes(1, 1, |lane, out| {
                out[0] = lane.iter().sum();
                Ok(())
            })
            .unwrap();
        assert_eq!(s.dims(), &[2, 1, 2]);
        assert_eq!(s.data(), &[6.0, 9.0, 24.0, 27.0]);
    }

    #[test]
    fn large_dims_slice_shape() {
        // only the shape bookkeeping; a real tensor of this size is out of desk scale
        let dims = [614usize, 928, 768, 4];
        let mut kept = dims.to_vec();
        kept.remove(3);
        assert_eq!(kept, vec![614, 928, 768]);
        let small = iota(vec![3, 4, 5, 4]).slice_axis(3, 0).unwrap();
        assert_eq!(small.dims(), &[3, 4, 5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tensor_strategy() -> impl Strategy<Value = DenseTensor> {
            prop::collection::vec(1usize..4, 1..5).prop_flat_map(|dims| {
                let n: usize = dims.iter().product();
                prop::collection::vec(-10.0f64..10.0, n)
                    .prop_map(move |data| DenseTensor::from_vec(dims.clone(), data).unwrap())
            })
        }

        proptest! {
            #[test]
            fn slice_then_stack_round_trips(t in tensor_strategy(), axis_seed in 0usize..8) {
                prop_assume!(t.ndim() >= 2);
                let axis = axis_seed % t.ndim();
                let parts: Vec<_> = (0..t.dims()[axis]).map(|v| t.slice_axis(axis, v).unwrap()).collect();
                let back = DenseTensor::stack(&parts, axis, &t.axis_names()[axis]).unwrap();
                prop_assert_eq!(back, t);
            }

            #[test]
            fn vectorize_rows_fixed_cols_linear(t in tensor_strategy(), copies in 1usize..4) {
                prop_assume!(t.ndim() >= 2);
                let parts = vec![t.clone(); copies];
                let one = stack_and_vectorize(&parts[..1], (0, 1)).unwrap();
                let many = stack_and_vectorize(&parts, (0, 1)).unwrap();
                prop_assert_eq!(one.rows(), many.rows());
                prop_assert_eq!(many.cols(), one.cols() * copies);
            }
        }
    }
}
