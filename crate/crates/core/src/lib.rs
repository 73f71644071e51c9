pub mod circuit;
pub mod compiler;
pub mod ft;
pub mod gadgets;
pub mod kv;
pub mod par;
pub mod qaoa;
pub mod sim;
