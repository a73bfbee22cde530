//! Deterministic retail star schema for tests and benchmarks.
//!
//! Two sales channels share the dimensions: store sales `SS(c_id, i_no,
//! p_no, s_id)` and catalog sales `CS(c_id, i_no, p_no)`, over customers
//! `C`, items `I`, promotions `P` (each for one item) and stores `S`.
//! Foreign keys in the fact tables are Zipf-distributed, so a few customers
//! and items dominate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::catalog::Database;
use crate::error::{Error, Result};
use crate::relation::{Relation, Schema};
use crate::value::{Kind, Value};

/// The retail model of the introduction: customers, items, discounted
/// purchases and co-purchases.
pub const RETAIL_MODEL: &str = "\
CREATE GRAPH(Graph_Name: RetailG);
CREATE VERTEX(Graph_Name: RetailG,
   Label: Customer, ID_Column: c_id,
   Query: SELECT name from C);
CREATE VERTEX(Graph_Name: RetailG,
   Label: Item, ID_Column: i_no,
   Query: SELECT name, price from I);
CREATE EDGE(Graph_Name: RetailG, Label: GetDisc,
   Src_Label: Customer, Dst_Label: Item,
   Query: SELECT null FROM C, SS, P, I
   WHERE C.c_id=SS.c_id AND I.i_no=SS.i_no
    AND P.p_no=SS.p_no AND I.i_no=P.i_no);
CREATE EDGE(Graph_Name: RetailG, Label: CoPur,
   Src_Label: Customer, Dst_Label: Customer,
   Query: SELECT null FROM C1, SS1, I, SS2, C2
    WHERE C1.c_id=SS1.c_id AND I.i_no=SS1.i_no
    AND C2.c_id=SS2.c_id AND I.i_no=SS2.i_no);
";

/// Fraud detection over store sales (`Sell`, `Buy`) combined with
/// recommendation over catalog sales (`CoPur`, `SamePro`).
pub const INTEGRATED_WORKLOAD: &str = "\
CREATE GRAPH(Graph_Name: Retail);
CREATE VERTEX(Graph_Name: Retail, Label: Customer, ID_Column: c_id,
   Query: SELECT name FROM C);
CREATE VERTEX(Graph_Name: Retail, Label: Item, ID_Column: i_no,
   Query: SELECT name, price FROM I);
CREATE VERTEX(Graph_Name: Retail, Label: Store, ID_Column: s_id,
   Query: SELECT name FROM S);
CREATE EDGE(Graph_Name: Retail, Label: Sell, Src_Label: Store, Dst_Label: Item,
   Query: SELECT null FROM SS, I, S
   WHERE SS.i_no = I.i_no AND SS.s_id = S.s_id);
CREATE EDGE(Graph_Name: Retail, Label: Buy, Src_Label: Customer, Dst_Label: Item,
   Query: SELECT null FROM SS, I, C
   WHERE SS.i_no = I.i_no AND SS.c_id = C.c_id);
CREATE EDGE(Graph_Name: Retail, Label: CoPur, Src_Label: Customer, Dst_Label: Customer,
   Query: SELECT null FROM C1, CS1, I, CS2, C2
   WHERE C1.c_id = CS1.c_id AND I.i_no = CS1.i_no
   AND C2.c_id = CS2.c_id AND I.i_no = CS2.i_no);
CREATE EDGE(Graph_Name: Retail, Label: SamePro, Src_Label: Customer, Dst_Label: Customer,
   Query: SELECT null FROM C1, CS1, P, CS2, C2
   WHERE C1.c_id = CS1.c_id AND P.p_no = CS1.p_no
   AND C2.c_id = CS2.c_id AND P.p_no = CS2.p_no);
";

/// Row counts and skew.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub store_sales: usize,
    pub catalog_sales: usize,
    pub customers: usize,
    pub items: usize,
    pub promotions: usize,
    pub stores: usize,
    /// Zipf exponent of the fact-table foreign keys.
    pub skew: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            store_sales: 10_000,
            catalog_sales: 2_000,
            customers: 500,
            items: 200,
            promotions: 50,
            stores: 20,
            skew: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("customers", self.customers),
            ("items", self.items),
            ("promotions", self.promotions),
            ("stores", self.stores),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.skew.is_finite() && self.skew >= 0.0) {
            return Err(Error::Config(format!("skew must be non-negative, got {}", self.skew)));
        }
        Ok(())
    }
}

struct Keys {
    dist: Zipf<f64>,
    /// Rank → key, so the heaviest keys are scattered over the id range.
    perm: Vec<i64>,
}

impl Keys {
    fn new(n: usize, skew: f64, rng: &mut ChaCha8Rng) -> Result<Keys> {
        let dist = Zipf::new(n as f64, skew).map_err(|e| Error::Config(e.to_string()))?;
        let mut perm: Vec<i64> = (1..=n as i64).collect();
        for i in (1..perm.len()).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        Ok(Keys { dist, perm })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Value {
        let rank = self.dist.sample(rng) as usize;
        Value::Int(self.perm[rank.clamp(1, self.perm.len()) - 1])
    }
}

fn table(name: &str, cols: &[(&str, Kind)], rows: Vec<Vec<Value>>) -> Result<Relation> {
    Relation::new(Schema::for_table(name, cols)?, rows)
}

/// Generate the schema above. The same spec and seed always give the same
/// database.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<Database> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut db = Database::default();

    let c = (1..=spec.customers as i64)
        .map(|i| vec![Value::Int(i), Value::text(format!("customer{i}"))])
        .collect();
    db.insert("C", table("C", &[("c_id", Kind::Int), ("name", Kind::Text)], c)?)?;

    let items: Vec<Vec<Value>> = (1..=spec.items as i64)
        .map(|i| {
            let price = (rng.random_range(100..10_000) as f64) / 100.0;
            vec![Value::Int(i), Value::text(format!("item{i}")), Value::Float(price)]
        })
        .collect();
    db.insert(
        "I",
        table(
            "I",
            &[("i_no", Kind::Int), ("name", Kind::Text), ("price", Kind::Float)],
            items,
        )?,
    )?;

    let p = (1..=spec.promotions as i64)
        .map(|i| vec![Value::Int(i), Value::Int(rng.random_range(1..=spec.items as i64))])
        .collect();
    db.insert("P", table("P", &[("p_no", Kind::Int), ("i_no", Kind::Int)], p)?)?;

    let s = (1..=spec.stores as i64)
        .map(|i| vec![Value::Int(i), Value::text(format!("store{i}"))])
        .collect();
    db.insert("S", table("S", &[("s_id", Kind::Int), ("name", Kind::Text)], s)?)?;

    let ck = Keys::new(spec.customers, spec.skew, &mut rng)?;
    let ik = Keys::new(spec.items, spec.skew, &mut rng)?;
    let pk = Keys::new(spec.promotions, spec.skew, &mut rng)?;
    let sk = Keys::new(spec.stores, spec.skew, &mut rng)?;

    let ss = (0..spec.store_sales)
        .map(|_| {
            vec![
                ck.draw(&mut rng),
                ik.draw(&mut rng),
                pk.draw(&mut rng),
                sk.draw(&mut rng),
            ]
        })
        .collect();
    db.insert(
        "SS",
        table(
            "SS",
            &[
                ("c_id", Kind::Int),
                ("i_no", Kind::Int),
                ("p_no", Kind::Int),
                ("s_id", Kind::Int),
            ],
            ss,
        )?,
    )?;
    let cs = (0..spec.catalog_sales)
        .map(|_| vec![ck.draw(&mut rng), ik.draw(&mut rng), pk.draw(&mut rng)])
        .collect();
    db.insert(
        "CS",
        table(
            "CS",
            &[("c_id", Kind::Int), ("i_no", Kind::Int), ("p_no", Kind::Int)],
            cs,
        )?,
    )?;
    Ok(db)
}
