//! Operator surface for blind policy evaluation: the `rollout-eval` command
//! line tool and the HTTP service behind `rollout-eval session serve`.

pub mod http;
