use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid volume: {0}")]
    Volume(String),
    #[error("label error: class id {class} is not below class count {classes}")]
    Label { class: u8, classes: usize },
    #[error("schedule error: epoch {epoch} outside schedule of {total} epochs")]
    Schedule { epoch: usize, total: usize },
    #[error("lesion placement failed after {attempts} attempts")]
    Placement { attempts: usize },
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
