use pof_protocol::message::decode_signed;
use pof_protocol::{Frame, Gamma, ProtocolMessage};
use proptest::prelude::*;

fn gamma() -> impl Strategy<Value = Gamma> {
    prop::collection::vec((any::<i64>(), any::<i32>()), 0..50).prop_map(|samples| Gamma { samples })
}

fn bytes() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(any::<u8>(), 0..40)
}

fn message() -> impl Strategy<Value = ProtocolMessage> {
    let finite = -1e12f64..1e12;
    prop_oneof![
        (".{0,12}", bytes(), bytes()).prop_map(|(id, pk, cert)| ProtocolMessage::JoinReq { id, pk, cert }),
        (".{0,12}", finite.clone(), finite.clone(), finite.clone(), finite).prop_map(|(id, start_t, end_t, freq, rate)| {
            ProtocolMessage::Reply {
                id,
                start_t,
                end_t,
                freq,
                rate,
            }
        }),
        (gamma(), ".{0,12}").prop_map(|(gamma, id)| ProtocolMessage::RssReport { gamma, id }),
        bytes().prop_map(|c| ProtocolMessage::Commit { c }),
        (gamma(), ".{0,12}", bytes()).prop_map(|(gamma, id, r)| ProtocolMessage::Open { gamma, id, r }),
        (".{0,12}", bytes(), bytes()).prop_map(|(id, pk, cert)| ProtocolMessage::VerifierBeacon { id, pk, cert }),
    ]
}

proptest! {
    #[test]
    fn bodies_roundtrip(m in message()) {
        let back = ProtocolMessage::decode_body(m.msg_type(), &m.encode_body()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn encoding_is_injective(a in message(), b in message()) {
        if a != b {
            prop_assert_ne!(a.signing_input(), b.signing_input());
        }
    }

    #[test]
    fn frames_roundtrip(payload in bytes()) {
        let f = Frame::Sealed(payload);
        prop_assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
    }

    #[test]
    fn decoders_never_panic(junk in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = Frame::decode(&junk);
        let _ = decode_signed(&junk);
        for t in 0..8 {
            let _ = ProtocolMessage::decode_body(t, &junk);
        }
    }
}
