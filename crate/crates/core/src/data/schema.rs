use serde::{Deserialize, Serialize};

/// The 42 flow features of the partitioned UNSW-NB15 CSVs, in file order.
pub const FEATURE_COLUMNS: [&str; 42] = [
    "dur",
    "proto",
    "service",
    "state",
    "spkts",
    "dpkts",
    "sbytes",
    "dbytes",
    "rate",
    "sttl",
    "dttl",
    "sload",
    "dload",
    "sloss",
    "dloss",
    "sinpkt",
    "dinpkt",
    "sjit",
    "djit",
    "swin",
    "stcpb",
    "dtcpb",
    "dwin",
    "tcprtt",
    "synack",
    "ackdat",
    "smean",
    "dmean",
    "trans_depth",
    "response_body_len",
    "ct_srv_src",
    "ct_state_ttl",
    "ct_dst_ltm",
    "ct_src_dport_ltm",
    "ct_dst_sport_ltm",
    "ct_dst_src_ltm",
    "is_ftp_login",
    "ct_ftp_cmd",
    "ct_flw_http_mthd",
    "ct_src_ltm",
    "ct_srv_dst",
    "is_sm_ips_ports",
];

pub const CATEGORICAL_COLUMNS: [&str; 3] = ["proto", "service", "state"];

pub const N_CLASSES: usize = 10;

pub(crate) fn column_index(name: &str) -> usize {
    FEATURE_COLUMNS
        .iter()
        .position(|&c| c == name)
        .expect("known column")
}

/// Traffic category. `Normal` is 0; attacks follow alphabetically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackClass {
    Normal,
    Analysis,
    Backdoor,
    DoS,
    Exploits,
    Fuzzers,
    Generic,
    Reconnaissance,
    Shellcode,
    Worms,
}

impl AttackClass {
    pub const ALL: [AttackClass; N_CLASSES] = [
        AttackClass::Normal,
        AttackClass::Analysis,
        AttackClass::Backdoor,
        AttackClass::DoS,
        AttackClass::Exploits,
        AttackClass::Fuzzers,
        AttackClass::Generic,
        AttackClass::Reconnaissance,
        AttackClass::Shellcode,
        AttackClass::Worms,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackClass::Normal => "Normal",
            AttackClass::Analysis => "Analysis",
            AttackClass::Backdoor => "Backdoor",
            AttackClass::DoS => "DoS",
            AttackClass::Exploits => "Exploits",
            AttackClass::Fuzzers => "Fuzzers",
            AttackClass::Generic => "Generic",
            AttackClass::Reconnaissance => "Reconnaissance",
            AttackClass::Shellcode => "Shellcode",
            AttackClass::Worms => "Worms",
        }
    }

    /// Case-insensitive; also accepts the `Backdoors` spelling found in some
    /// releases of the dataset.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("backdoors") {
            return Some(AttackClass::Backdoor);
        }
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl std::fmt::Display for AttackClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
