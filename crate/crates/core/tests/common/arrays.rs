//! Random arrays and bridges to the ndarray-npy reference implementation.

use ndarray::{ArrayD, IxDyn, ShapeBuilder};
use ndarray_npy::{ReadNpyExt, WriteNpyExt};
use ndiserve::{ArrayData, Dtype, ScanArray};
use rand::Rng;

/// Random array of `dtype` with `rank` dimensions and at most `max_len` elements.
pub fn random_array<R: Rng>(rng: &mut R, dtype: Dtype, rank: usize, max_len: usize) -> ScanArray {
    let mut shape = Vec::with_capacity(rank);
    let mut len = 1usize;
    for _ in 0..rank {
        let cap = (max_len / len.max(1)).clamp(1, 12);
        let d = rng.gen_range(0..=cap);
        shape.push(d);
        len *= d.max(1);
    }
    let n: usize = shape.iter().product();
    let data = match dtype {
        // Raw bit patterns cover NaN payloads, infinities and subnormals.
        Dtype::F32 => ArrayData::F32((0..n).map(|_| f32::from_bits(rng.gen())).collect()),
        Dtype::F64 => ArrayData::F64((0..n).map(|_| f64::from_bits(rng.gen())).collect()),
        Dtype::I32 => ArrayData::I32((0..n).map(|_| rng.gen()).collect()),
        Dtype::I64 => ArrayData::I64((0..n).map(|_| rng.gen()).collect()),
        Dtype::U8 => ArrayData::U8((0..n).map(|_| rng.gen()).collect()),
    };
    ScanArray::new(shape, data).unwrap()
}

fn nd<T: Clone>(shape: &[usize], data: &[T], fortran: bool) -> ArrayD<T> {
    let c = ArrayD::from_shape_vec(IxDyn(shape), data.to_vec()).unwrap();
    if fortran {
        let mut f = ArrayD::from_shape_vec(IxDyn(shape).f(), data.to_vec()).unwrap();
        f.assign(&c);
        f
    } else {
        c
    }
}

/// Serializes with the reference writer, optionally in Fortran order.
pub fn reference_write(arr: &ScanArray, fortran: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let shape = arr.shape();
    match arr.data() {
        ArrayData::F32(v) => nd(shape, v, fortran).write_npy(&mut out),
        ArrayData::F64(v) => nd(shape, v, fortran).write_npy(&mut out),
        ArrayData::I32(v) => nd(shape, v, fortran).write_npy(&mut out),
        ArrayData::I64(v) => nd(shape, v, fortran).write_npy(&mut out),
        ArrayData::U8(v) => nd(shape, v, fortran).write_npy(&mut out),
    }
    .unwrap();
    out
}

fn flat<T: Clone>(a: ArrayD<T>) -> (Vec<usize>, Vec<T>) {
    (a.shape().to_vec(), a.iter().cloned().collect())
}

/// Reads with the reference reader, expecting `dtype`.
pub fn reference_read(bytes: &[u8], dtype: Dtype) -> ScanArray {
    let (shape, data) = match dtype {
        Dtype::F32 => {
            let (s, d) = flat(ArrayD::<f32>::read_npy(bytes).unwrap());
            (s, ArrayData::F32(d))
        }
        Dtype::F64 => {
            let (s, d) = flat(ArrayD::<f64>::read_npy(bytes).unwrap());
            (s, ArrayData::F64(d))
        }
        Dtype::I32 => {
            let (s, d) = flat(ArrayD::<i32>::read_npy(bytes).unwrap());
            (s, ArrayData::I32(d))
        }
        Dtype::I64 => {
            let (s, d) = flat(ArrayD::<i64>::read_npy(bytes).unwrap());
            (s, ArrayData::I64(d))
        }
        Dtype::U8 => {
            let (s, d) = flat(ArrayD::<u8>::read_npy(bytes).unwrap());
            (s, ArrayData::U8(d))
        }
    };
    ScanArray::new(shape, data).unwrap()
}
