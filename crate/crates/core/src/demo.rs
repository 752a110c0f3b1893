//! A small offline fixture: one competition problem with its decomposer and
//! formalizer replies and the tactic steps a checker should accept.

pub mod e2e;

pub const AMC_ID: &str = "amc12a_2021_p7";

pub const AMC_INFORMAL_STATEMENT: &str =
    "What is the least possible value of $(xy-1)^2+(x+y)^2$ for real numbers $x$ and $y$? Show that it is 1.";

pub const AMC_INFORMAL_PROOF: &str = "Expanding, we get that the expression is $x^2+2xy+y^2+x^2y^2-2xy+1$ or $x^2+y^2+x^2y^2+1$. By the Trivial Inequality (all squares are nonnegative) the minimum value for this is 1, which can be achieved at $x=y=0$.";

pub const AMC_FORMAL: &str = "theorem amc12a_2021_p7:\n  fixes x y ::real\n  shows \"1 \\<le> ((x * y) - 1)^2 + (x + y)^2\"";

pub const AMC_DECOMPOSITION: &str = r#"Structure proof:
Step 1: Expand the expression \((xy-1)^2+(x+y)^2\) to obtain \(x^2+2xy+y^2+x^2y^2-2xy+1\).
Step 2: Simplify the expression derived in Step 1 to obtain \(x^2+y^2+x^2y^2+1\).
Step 3: Apply the Trivial Inequality, which states that all squares are nonnegative, to argue that the minimum value of the expression is 1.
Step 4: Show that the minimum value of 1 can be achieved when \(x=y=0\).

Required skills:
Thoughts 1: The Trivial Inequality is a key concept in this proof. Understanding and applying this inequality is crucial to show that the minimum value of the expression is 1.

Code 1:
```isabelle
lemma trivial_inequality:
  fixes a :: real
  shows "0 \<le> a^2"
```

Thoughts 2: The ability to expand and simplify algebraic expressions is important in this proof.

Code 2:
```isabelle
lemma expand_expression:
  fixes x y :: real
  shows "(x * y - 1)^2 + (x + y)^2 = x^2 + 2 * x * y + y^2 + x^2 * y^2 - 2 * x * y + 1"
```

Thoughts 3: The ability to substitute values into an expression and evaluate it is necessary to show that the minimum value of 1 can be achieved when $x=y=0$.

Code 3:
```isabelle
lemma substitute_values:
  fixes x y :: real
  assumes "x = 0" "y = 0"
  shows "(x * y - 1)^2 + (x + y)^2 = 1"
```
"#;

pub const AMC_THEORY: &str = r#"theory Scratch
  imports Complex_Main
begin
lemma am_gm:
  fixes x y :: real
  shows "x^2 + y^2 \<ge> 2 * x * y"
proof -
  have "(x - y)^2 \<ge> 0"
    by simp
  then have "x^2 - 2 * x * y + y^2 \<ge> 0"
    by (simp add: algebra_simps power2_diff)
  then have "x^2 + y^2 \<ge> 2 * x * y"
    by simp
  then show ?thesis
    by simp
qed
theorem amc12a_2021_p7:
  fixes x y ::real
  shows "1 \<le> ((x * y) - 1)^2 + (x + y)^2"
  apply (auto simp:algebra_simps power2_eq_square)
  by (metis am_gm add.commute power2_sum zero_le_power2)
end
"#;

/// Tactic steps of [`AMC_THEORY`] that check.
pub const AMC_ACCEPTED_STEPS: [&str; 4] = [
    "by simp",
    "by (simp add: algebra_simps power2_diff)",
    "apply (auto simp:algebra_simps power2_eq_square)",
    "by (metis am_gm add.commute power2_sum zero_le_power2)",
];

/// A formalizer reply: the theory in a fenced block after some prose.
pub fn formalizer_reply(theory: &str) -> String {
    format!("Formal proof:\n```isabelle\n{}\n```\n", theory.trim_end())
}

/// A request for the solver and a proof of it.
pub const EXPONENT_REQUEST: &str = "lemma exponent_properties:\n  fixes a b :: real\n  assumes \"0 < a \\<and> 0 < b\"\n  shows \"a^n * a^m = a^(n + m) \\<and> (a^n)^m = a^(n * m)\"";

pub const EXPONENT_THEORY: &str = r#"theory Scratch
  imports Complex_Main
begin
lemma exponent_properties:
  fixes a b :: real
  assumes "0 < a \<and> 0 < b"
  shows "a^n * a^m = a^(n + m) \<and> (a^n)^m = a^(n * m)"
proof
  show "a^n * a^m = a^(n + m)"
    by (simp add: assms(1) power_add)
next
  show "(a^n)^m = a^(n * m)"
    by (simp add: assms(1) power_mult)
qed
end
"#;

/// A skill and the generalization an evolver step should produce from it.
pub const CROSS_MUL_THEORY: &str = r#"theory Scratch
  imports Complex_Main
begin
lemma divide_cross_mul:
  fixes a b c d :: real
  assumes "b \<noteq> 0"
    and "d \<noteq> 0"
    and "a / b = c / d"
  shows "a * d = b * c"
  using assms by (auto simp: field_simps)
end
"#;

pub const CROSS_MUL_GEN_THEORY: &str = r#"theory Scratch
  imports Complex_Main
begin
lemma divide_cross_mul_generalized:
  fixes a b c d x y :: real
  assumes "b \<noteq> 0"
    and "d \<noteq> 0"
    and "a / b = c / d"
    and "a = x * b"
    and "c = y * d"
  shows "x * d = y * b"
  using assms by (auto simp: field_simps)
end
"#;
