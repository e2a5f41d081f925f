//! Certificates of poly-quadratic stability, detectability and
//! stabilizability for discrete-time polytopic LPV systems, with gain
//! synthesis and verification.

pub mod io;
pub mod lmi;
pub mod matcore;
pub mod sdpfeas;
pub mod conditions;
pub mod lpv;
pub mod gains;
pub mod verify;
pub mod bisect;
pub mod report;
