use ndarray::Array2;

use crate::classes::Class;
use crate::error::{Error, Result};
use crate::geometry::DepthMap;

/// Default curation window.
pub const DEFAULT_MEDIAN_WINDOW: usize = 10;

/// Median over each `window x window` neighborhood with clamp-to-edge
/// padding. An even window covers offsets `-w/2 ..= w/2 - 1`. With an even
/// sample count the lower median is taken, so class maps stay integral.
pub fn median_filter<T: Copy + PartialOrd>(map: &Array2<T>, window: usize) -> Result<Array2<T>> {
    if window == 0 {
        return Err(Error::Config("median window must be at least 1".into()));
    }
    if window == 1 {
        return Ok(map.clone());
    }
    let (h, w) = map.dim();
    if h == 0 || w == 0 {
        return Ok(map.clone());
    }
    let lo = (window / 2) as isize;
    let hi = window as isize - lo - 1;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mid = (window * window - 1) / 2;
    let mut buf = Vec::with_capacity(window * window);
    let mut out = map.clone();
    for j in 0..h {
        for i in 0..w {
            buf.clear();
            for dj in -lo..=hi {
                let jj = clamp(j as isize + dj, h);
                for di in -lo..=hi {
                    buf.push(map[[jj, clamp(i as isize + di, w)]]);
                }
            }
            let (_, m, _) = buf.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("unordered value in median filter"));
            out[[j, i]] = *m;
        }
    }
    Ok(out)
}

/// Filters depth and class maps, then restores the sky coupling: a pixel is
/// sky when either filtered map says so, and both maps are set accordingly.
pub fn curate(depth: &DepthMap, seg: &Array2<u8>, window: usize) -> Result<(DepthMap, Array2<u8>)> {
    let mut d = median_filter(&depth.values, window)?;
    let mut s = median_filter(seg, window)?;
    let sky = Class::Sky as u8;
    for (dv, sv) in d.iter_mut().zip(s.iter_mut()) {
        if *sv == sky || *dv >= depth.max_depth {
            *sv = sky;
            *dv = depth.max_depth;
        }
    }
    Ok((DepthMap::new(d, depth.max_depth)?, s))
}
