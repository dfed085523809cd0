//! Serde helpers for exact numbers: big integers become JSON numbers of any
//! length, rationals become `"num/den"` strings.

use num_bigint::BigUint;
use num_rational::BigRational;
use serde::{Serialize, Serializer};

use crate::exact::rational_string;

pub fn big_uint<S: Serializer>(x: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    let n: serde_json::Number = x.to_string().parse().map_err(serde::ser::Error::custom)?;
    n.serialize(s)
}

pub fn opt_big_uint<S: Serializer>(x: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(x) => big_uint(x, s),
        None => s.serialize_none(),
    }
}

pub fn rational<S: Serializer>(q: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&rational_string(q))
}

pub fn opt_rational<S: Serializer>(q: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
    match q {
        Some(q) => rational(q, s),
        None => s.serialize_none(),
    }
}
