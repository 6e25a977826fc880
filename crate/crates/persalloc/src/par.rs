//! Thin compatibility layer over rayon so the crate builds with or without
//! the `parallel` feature. Experiment code writes `into_par_iter()` once; the
//! sequential fallback maps it onto plain iterators.

#[cfg(feature = "parallel")]
mod imp {
    pub use rayon::prelude::*;

    /// Run `f` inside a pool of `threads` workers (0 = rayon default).
    pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
        if threads == 0 {
            f()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("failed to build thread pool")
                .install(f)
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    /// Sequential stand-in for rayon's trait of the same name.
    pub trait IntoParallelIterator {
        type Item;
        type Iter: Iterator<Item = Self::Item>;
        fn into_par_iter(self) -> Self::Iter;
    }

    impl<I: IntoIterator> IntoParallelIterator for I {
        type Item = I::Item;
        type Iter = I::IntoIter;
        fn into_par_iter(self) -> Self::Iter {
            self.into_iter()
        }
    }

    /// Sequential build: the thread count is irrelevant by construction.
    pub fn with_threads<T>(_threads: usize, f: impl FnOnce() -> T) -> T {
        f()
    }
}

pub use imp::*;
