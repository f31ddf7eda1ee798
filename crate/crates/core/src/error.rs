use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Buffer lengths, image dimensions or parameter counts disagree.
    #[error("shape error: {0}")]
    Shape(String),
    /// A NaN or infinity showed up where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The peer sent something that violates the wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The peer answered with an error frame.
    #[error("remote error: {0}")]
    Remote(String),
    /// The byte stream to the peer broke.
    #[error("transport error: {0}")]
    Transport(#[source] io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    /// No optimization run produced a usable result.
    #[error("run failed: {0}")]
    RunFailed(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    /// True for failures of the connection to a remote backend.
    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
