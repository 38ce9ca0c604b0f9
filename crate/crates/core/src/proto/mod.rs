//! Message vocabulary, security envelopes with exposure accounting, and traces.

mod envelope;
mod message;
mod trace;

pub use envelope::{
    exposed_fields, open, open_command, protect, protect_command, Body, Layer, ProtoError, SecurityEnvelope,
};
pub use message::{
    is_known_kind, Exposure, Generation, IdentifierKind, IdentityKind, Message, MobileIdentity, NasMessage,
    NeighborCell, PagingIdentity, RadioCapabilities, RegistrationType, RrcMessage, NAS_KINDS, RRC_KINDS,
};
pub use trace::{decode_trace, encode_event, encode_trace, Delivery, Trace, TraceError, TraceEvent};
