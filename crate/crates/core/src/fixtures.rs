//! Protocol and idealization files shipped with the crate.

/// Needham-Schroeder public-key protocol (three-message core).
pub const NSPK: &str = include_str!("../fixtures/nspk.proto.casper");
/// Needham-Schroeder-Lowe, with the responder's name in message 2.
pub const NSL: &str = include_str!("../fixtures/nsl.proto.casper");
/// BAN idealization of the symmetric-key Needham-Schroeder protocol.
pub const NSPK_SYM_BAN: &str = include_str!("../fixtures/nspk-sym.ban");

/// Looks up a bundled file by short name or file name.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "nspk" | "nspk.proto.casper" => Some(NSPK),
        "nsl" | "nsl.proto.casper" => Some(NSL),
        "nspk-sym" | "nspk-sym.ban" => Some(NSPK_SYM_BAN),
        _ => None,
    }
}
