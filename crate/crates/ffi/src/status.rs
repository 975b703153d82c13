use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use betaweighter::Error;

/// Result code of every fallible call. On anything but `Ok` a message is
/// available from `bw_last_error` on the same thread.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Contract = 4,
    Config = 5,
    Format = 6,
    Io = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

pub(crate) fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

pub(crate) fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn bw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

pub(crate) struct Fail(pub BwStatus, pub String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Domain(_) => BwStatus::Domain,
            Error::Contract(_) => BwStatus::Contract,
            Error::Config(_) => BwStatus::Config,
            Error::Format { .. } | Error::Json(_) | Error::Csv(_) => BwStatus::Format,
            Error::Io(_) => BwStatus::Io,
        };
        Fail(code, e.to_string())
    }
}

pub(crate) fn null(what: &str) -> Fail {
    Fail(BwStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into status codes.
pub(crate) fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BwStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BwStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            BwStatus::Panic
        }
    }
}
