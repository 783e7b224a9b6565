//! C interface to the aviary library.
//!
//! Every function returns an [`AviaryStatus`]; on failure the message is
//! available from [`aviary_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Panics never
//! cross the boundary; they surface as `AVIARY_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use aviary::distort::{apply, DistortionConfig, DistortionKind};
use aviary::flocksynth::bin_flock_size;
use aviary::learners::{Classifier, TrainedModel};
use aviary::pipeline::{analytic_cca_accuracy, StageStats};
use aviary::raster::{load_png, save_png, Image};
use aviary::taxonomy::{size_class_of, SizeClass, SizeThresholds};
use aviary::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AviaryStatus {
    Ok = 0,
    InvalidArgument = 1,
    Validation = 2,
    CanvasTooSmall = 3,
    TrainingFailure = 4,
    Configuration = 5,
    MissingInput = 6,
    UndefinedAuc = 7,
    Io = 8,
    MalformedPng = 9,
    Parse = 10,
    NullPointer = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

/// Opaque image handle.
pub struct AviaryImage {
    inner: Image,
}

/// Opaque trained-model handle.
pub struct AviaryModel {
    inner: TrainedModel,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AviaryStatus {
    match e {
        Error::InvalidArgument(_) => AviaryStatus::InvalidArgument,
        Error::Validation(_) => AviaryStatus::Validation,
        Error::CanvasTooSmall { .. } => AviaryStatus::CanvasTooSmall,
        Error::TrainingFailure { .. } => AviaryStatus::TrainingFailure,
        Error::Configuration(_) => AviaryStatus::Configuration,
        Error::MissingInput(_) => AviaryStatus::MissingInput,
        Error::UndefinedAuc(_) => AviaryStatus::UndefinedAuc,
        Error::Io { .. } => AviaryStatus::Io,
        Error::MalformedPng { .. } => AviaryStatus::MalformedPng,
        Error::Parse(_) | Error::Json(_) => AviaryStatus::Parse,
    }
}

struct Failure(AviaryStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(AviaryStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AviaryStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AviaryStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AviaryStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AviaryStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn aviary_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aviary_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `height * width * channels` interleaved values in [0, 1] into a new image.
#[no_mangle]
pub unsafe extern "C" fn aviary_image_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const c_double,
    out: *mut *mut AviaryImage,
) -> AviaryStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Failure(AviaryStatus::InvalidArgument, "image size overflows".into()))?;
        let values = std::slice::from_raw_parts(data, n).to_vec();
        let img = Image::new(height, width, channels, values)?;
        *out = Box::into_raw(Box::new(AviaryImage { inner: img }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aviary_image_load_png(path: *const c_char, out: *mut *mut AviaryImage) -> AviaryStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let img = load_png(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(AviaryImage { inner: img }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn aviary_image_save_png(image: *const AviaryImage, path: *const c_char) -> AviaryStatus {
    guard(|| {
        let img = ref_arg(image, "image")?;
        save_png(&img.inner, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Releases an image; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn aviary_image_free(image: *mut AviaryImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

#[no_mangle]
pub unsafe extern "C" fn aviary_image_shape(
    image: *const AviaryImage,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> AviaryStatus {
    guard(|| {
        let img = &ref_arg(image, "image")?.inner;
        *out_arg(height, "height")? = img.height();
        *out_arg(width, "width")? = img.width();
        *out_arg(channels, "channels")? = img.channels();
        Ok(())
    })
}

/// Copies the interleaved pixel values into `buf`, which must hold `len >= h*w*c` doubles.
#[no_mangle]
pub unsafe extern "C" fn aviary_image_data(image: *const AviaryImage, buf: *mut c_double, len: usize) -> AviaryStatus {
    guard(|| {
        let data = ref_arg(image, "image")?.inner.data();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < data.len() {
            return Err(Failure(
                AviaryStatus::BufferTooSmall,
                format!("buffer holds {len} values, image has {}", data.len()),
            ));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// Applies a distortion ("rain", "snow", "noise" or "darkness") to a copy of `image`.
#[no_mangle]
pub unsafe extern "C" fn aviary_distort(
    image: *const AviaryImage,
    kind: *const c_char,
    level: c_double,
    seed: u64,
    out: *mut *mut AviaryImage,
) -> AviaryStatus {
    guard(|| {
        let img = ref_arg(image, "image")?;
        let out = out_arg(out, "out")?;
        let kind: DistortionKind = str_arg(kind, "kind")?.parse()?;
        let result = apply(&img.inner, &DistortionConfig { kind, level, seed })?;
        *out = Box::into_raw(Box::new(AviaryImage { inner: result }));
        Ok(())
    })
}

/// Loads a model file written by `aviary train`.
#[no_mangle]
pub unsafe extern "C" fn aviary_model_load(path: *const c_char, out: *mut *mut AviaryModel) -> AviaryStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let inner = TrainedModel::load(str_arg(path, "path")?)?;
        let names = inner
            .classes
            .iter()
            .map(|c| {
                CString::new(c.as_str()).map_err(|_| Failure(AviaryStatus::Parse, "class name contains NUL".into()))
            })
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(AviaryModel { inner, names }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn aviary_model_free(model: *mut AviaryModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn aviary_model_num_classes(model: *const AviaryModel, out: *mut usize) -> AviaryStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(model, "model")?.names.len();
        Ok(())
    })
}

/// Name of class `index`; the string lives as long as the model.
#[no_mangle]
pub unsafe extern "C" fn aviary_model_class_name(
    model: *const AviaryModel,
    index: usize,
    out: *mut *const c_char,
) -> AviaryStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let out = out_arg(out, "out")?;
        let name = m.names.get(index).ok_or_else(|| {
            Failure(
                AviaryStatus::InvalidArgument,
                format!("class index {index} out of range ({})", m.names.len()),
            )
        })?;
        *out = name.as_ptr();
        Ok(())
    })
}

/// Writes per-class scores into `scores` (length `len >= num_classes`) and
/// the predicted class index into `label`. Either output may be null.
#[no_mangle]
pub unsafe extern "C" fn aviary_model_predict(
    model: *const AviaryModel,
    image: *const AviaryImage,
    scores: *mut c_double,
    len: usize,
    label: *mut usize,
) -> AviaryStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let img = ref_arg(image, "image")?;
        let s = m.inner.predict_scores(&img.inner)?;
        if !scores.is_null() {
            if len < s.len() {
                return Err(Failure(
                    AviaryStatus::BufferTooSmall,
                    format!("score buffer holds {len} values, model has {} classes", s.len()),
                ));
            }
            ptr::copy_nonoverlapping(s.as_ptr(), scores, s.len());
        }
        if let Some(l) = label.as_mut() {
            *l = aviary::metrics::argmax(&s);
        }
        Ok(())
    })
}

/// Cascade accuracy from stage ratios. Arrays are ordered Small, Medium,
/// Large; `priors` null means uniform.
#[no_mangle]
pub unsafe extern "C" fn aviary_analytic_cca_accuracy(
    r1_bird: c_double,
    r2: *const c_double,
    a3: *const c_double,
    priors: *const c_double,
    out: *mut c_double,
) -> AviaryStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let triple = |p: *const c_double, what: &str| -> Result<[f64; 3], Failure> {
            if p.is_null() {
                return Err(null(what));
            }
            let s = std::slice::from_raw_parts(p, 3);
            Ok([s[0], s[1], s[2]])
        };
        let mut stats = StageStats::uniform(r1_bird, triple(r2, "r2")?, triple(a3, "a3")?);
        if !priors.is_null() {
            stats.priors = SizeClass::ALL.into_iter().zip(triple(priors, "priors")?).collect();
        }
        *out = analytic_cca_accuracy(&stats)?;
        Ok(())
    })
}

/// Size class (0 Small, 1 Medium, 2 Large) of a weight range in grams under the default thresholds.
#[no_mangle]
pub unsafe extern "C" fn aviary_size_class_of(
    weight_min: c_double,
    weight_max: c_double,
    out: *mut u32,
) -> AviaryStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = size_class_of(weight_min, weight_max, &SizeThresholds::default())?.index() as u32;
        Ok(())
    })
}

/// Flock-size bin index (0 for 5-20 up to 4 for 81-100).
#[no_mangle]
pub unsafe extern "C" fn aviary_bin_flock_size(count: usize, out: *mut u32) -> AviaryStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = bin_flock_size(count)?.index() as u32;
        Ok(())
    })
}
