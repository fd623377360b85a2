//! Node-parallel maps. With the `parallel` feature the work is spread over the
//! current rayon pool; without it the same closures run serially. Every
//! output slot is written by exactly one closure call, so results do not
//! depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const CHUNK: usize = 4096;

/// `dst[p] = f(p)` for every node.
pub(crate) fn fill_nodes<V: Send, F: Fn(usize) -> V + Sync>(dst: &mut [V], f: F) {
    #[cfg(feature = "parallel")]
    dst.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (o, slot) in chunk.iter_mut().enumerate() {
            *slot = f(base + o);
        }
    });
    #[cfg(not(feature = "parallel"))]
    for (p, slot) in dst.iter_mut().enumerate() {
        *slot = f(p);
    }
}

/// Calls `f(row_index, row)` for consecutive rows of `row_len` nodes.
pub(crate) fn fill_rows<V: Send, F: Fn(usize, &mut [V]) + Sync>(dst: &mut [V], row_len: usize, f: F) {
    #[cfg(feature = "parallel")]
    dst.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
    #[cfg(not(feature = "parallel"))]
    for (i, row) in dst.chunks_mut(row_len).enumerate() {
        f(i, row);
    }
}

/// Two outputs written in lock step.
pub(crate) fn fill_nodes2<A: Send, B: Send, F: Fn(usize, &mut A, &mut B) + Sync>(a: &mut [A], b: &mut [B], f: F) {
    assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    a.par_chunks_mut(CHUNK)
        .zip(b.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, (ca, cb))| {
            let base = c * CHUNK;
            for (o, (x, y)) in ca.iter_mut().zip(cb.iter_mut()).enumerate() {
                f(base + o, x, y);
            }
        });
    #[cfg(not(feature = "parallel"))]
    for (p, (x, y)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
        f(p, x, y);
    }
}

/// `f(p, &mut dst[p])` for every node.
pub(crate) fn update_nodes<V: Send, F: Fn(usize, &mut V) + Sync>(dst: &mut [V], f: F) {
    #[cfg(feature = "parallel")]
    dst.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (o, slot) in chunk.iter_mut().enumerate() {
            f(base + o, slot);
        }
    });
    #[cfg(not(feature = "parallel"))]
    for (p, slot) in dst.iter_mut().enumerate() {
        f(p, slot);
    }
}
