//! Exhaustive recognizer for the pipeline grammar, written without reference
//! to the crate's lexer or parser. It enumerates every derivation of every
//! span (memoized), so it also detects ambiguity.
//!
//! ```text
//! P -> S | S ">>" P
//! S -> U | U "%" I
//! U -> N | A
//! A -> "{" B "}" N | N "{" B "}" N
//! B -> P | P "," B
//! ```

use std::collections::HashMap;

use pipeserve_core::pipeline::PipelineAst;
use rand::seq::SliceRandom;
use rand::Rng;

/// A raw generated token, before any classification.
#[derive(Debug, Clone, PartialEq)]
pub enum GenTok {
    Word(String),
    Sym(&'static str),
    Bad(char),
}

pub fn render(tokens: &[GenTok], sep: &str) -> String {
    tokens
        .iter()
        .map(|t| match t {
            GenTok::Word(w) => w.clone(),
            GenTok::Sym(s) => s.to_string(),
            GenTok::Bad(c) => c.to_string(),
        })
        .collect::<Vec<_>>()
        .join(sep)
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    Name(String),
    Int(usize),
    BadInt,
    Pipe,
    Pct,
    L,
    R,
    C,
}

fn classify(tokens: &[GenTok]) -> Option<Vec<Term>> {
    let mut out = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        let term = match t {
            GenTok::Bad(_) => return None,
            GenTok::Sym(">>") => Term::Pipe,
            GenTok::Sym("%") => Term::Pct,
            GenTok::Sym("{") => Term::L,
            GenTok::Sym("}") => Term::R,
            GenTok::Sym(",") => Term::C,
            GenTok::Sym(other) => panic!("unknown symbol {other}"),
            GenTok::Word(w) => {
                let after_pct = i > 0 && tokens[i - 1] == GenTok::Sym("%");
                if after_pct && w.chars().all(|c| c.is_ascii_digit()) {
                    match w.parse::<usize>() {
                        Ok(k) if k >= 1 => Term::Int(k),
                        _ => Term::BadInt,
                    }
                } else {
                    Term::Name(w.clone())
                }
            }
        };
        out.push(term);
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Nt {
    P,
    S,
    U,
    A,
    B,
}

#[derive(Debug, Clone, Copy)]
enum Sym {
    Var(Nt),
    Name,
    Int,
    Pipe,
    Pct,
    L,
    R,
    C,
}

#[derive(Debug, Clone)]
enum Val {
    Tok(Term),
    Tree(Tree),
}

#[derive(Debug, Clone)]
enum Tree {
    Ast(PipelineAst),
    Branches(Vec<PipelineAst>),
}

fn rules(nt: Nt) -> Vec<Vec<Sym>> {
    use Sym::*;
    match nt {
        Nt::P => vec![vec![Var(Nt::S)], vec![Var(Nt::S), Pipe, Var(Nt::P)]],
        Nt::S => vec![vec![Var(Nt::U)], vec![Var(Nt::U), Pct, Int]],
        Nt::U => vec![vec![Name], vec![Var(Nt::A)]],
        Nt::A => vec![vec![L, Var(Nt::B), R, Name], vec![Name, L, Var(Nt::B), R, Name]],
        Nt::B => vec![vec![Var(Nt::P)], vec![Var(Nt::P), C, Var(Nt::B)]],
    }
}

struct Recognizer<'a> {
    terms: &'a [Term],
    memo: HashMap<(Nt, usize, usize), Vec<Tree>>,
}

impl<'a> Recognizer<'a> {
    fn derive(&mut self, nt: Nt, i: usize, j: usize) -> Vec<Tree> {
        if let Some(v) = self.memo.get(&(nt, i, j)) {
            return v.clone();
        }
        // every symbol spans at least one token, so recursion on strictly
        // smaller spans or the same span with a different non-terminal;
        // seed the memo to cut the (impossible) unit cycles
        self.memo.insert((nt, i, j), Vec::new());
        let mut out = Vec::new();
        for rule in rules(nt) {
            for vals in self.seq(&rule, i, j) {
                out.push(build(nt, vals));
            }
        }
        self.memo.insert((nt, i, j), out.clone());
        out
    }

    fn seq(&mut self, syms: &[Sym], i: usize, j: usize) -> Vec<Vec<Val>> {
        if syms.is_empty() {
            return if i == j { vec![vec![]] } else { vec![] };
        }
        let rest = syms.len() - 1;
        let mut out = Vec::new();
        if j < i + 1 + rest {
            return out;
        }
        for k in (i + 1)..=(j - rest) {
            let heads: Vec<Val> = match syms[0] {
                Sym::Var(nt) => self.derive(nt, i, k).into_iter().map(Val::Tree).collect(),
                t => {
                    if k != i + 1 || !term_matches(t, &self.terms[i]) {
                        continue;
                    }
                    vec![Val::Tok(self.terms[i].clone())]
                }
            };
            if heads.is_empty() {
                continue;
            }
            let tails = self.seq(&syms[1..], k, j);
            for h in &heads {
                for t in &tails {
                    let mut v = vec![h.clone()];
                    v.extend(t.iter().cloned());
                    out.push(v);
                }
            }
        }
        out
    }
}

fn term_matches(sym: Sym, term: &Term) -> bool {
    matches!(
        (sym, term),
        (Sym::Name, Term::Name(_))
            | (Sym::Int, Term::Int(_))
            | (Sym::Pipe, Term::Pipe)
            | (Sym::Pct, Term::Pct)
            | (Sym::L, Term::L)
            | (Sym::R, Term::R)
            | (Sym::C, Term::C)
    )
}

fn ast(v: &Val) -> PipelineAst {
    match v {
        Val::Tree(Tree::Ast(a)) => a.clone(),
        other => panic!("expected ast, got {other:?}"),
    }
}

fn name(v: &Val) -> String {
    match v {
        Val::Tok(Term::Name(n)) => n.clone(),
        other => panic!("expected name, got {other:?}"),
    }
}

fn branches(v: &Val) -> Vec<PipelineAst> {
    match v {
        Val::Tree(Tree::Branches(b)) => b.clone(),
        other => panic!("expected branches, got {other:?}"),
    }
}

fn build(nt: Nt, vals: Vec<Val>) -> Tree {
    match (nt, vals.len()) {
        (Nt::P, 1) | (Nt::S, 1) => Tree::Ast(ast(&vals[0])),
        (Nt::P, 3) => {
            let mut stages = vec![ast(&vals[0])];
            match ast(&vals[2]) {
                PipelineAst::Sequence(rest) => stages.extend(rest),
                single => stages.push(single),
            }
            Tree::Ast(PipelineAst::Sequence(stages))
        }
        (Nt::S, 3) => {
            let k = match &vals[2] {
                Val::Tok(Term::Int(k)) => *k,
                other => panic!("expected int, got {other:?}"),
            };
            Tree::Ast(PipelineAst::limit(ast(&vals[0]), k))
        }
        (Nt::U, 1) => match &vals[0] {
            Val::Tok(Term::Name(n)) => Tree::Ast(PipelineAst::Service(n.clone())),
            v => Tree::Ast(ast(v)),
        },
        (Nt::A, 4) => Tree::Ast(PipelineAst::Parallel {
            generator: None,
            branches: branches(&vals[1]),
            fuser: name(&vals[3]),
        }),
        (Nt::A, 5) => Tree::Ast(PipelineAst::Parallel {
            generator: Some(name(&vals[0])),
            branches: branches(&vals[2]),
            fuser: name(&vals[4]),
        }),
        (Nt::B, 1) => Tree::Branches(vec![ast(&vals[0])]),
        (Nt::B, 3) => {
            let mut b = vec![ast(&vals[0])];
            b.extend(branches(&vals[2]));
            Tree::Branches(b)
        }
        _ => unreachable!(),
    }
}

/// All parse trees of `tokens` under the grammar (empty means rejected).
pub fn parse_all(tokens: &[GenTok]) -> Vec<PipelineAst> {
    let Some(terms) = classify(tokens) else {
        return Vec::new();
    };
    if terms.is_empty() {
        return Vec::new();
    }
    let mut r = Recognizer {
        terms: &terms,
        memo: HashMap::new(),
    };
    r.derive(Nt::P, 0, terms.len())
        .into_iter()
        .map(|t| match t {
            Tree::Ast(a) => a,
            Tree::Branches(_) => unreachable!(),
        })
        .collect()
}

const WORDS: &[&str] = &["a", "b", "rrf", "e-1", "x.y_2", "gen", "7"];
const INTS: &[&str] = &["1", "3", "50", "0"];
const SYMS: &[&str] = &[">>", "%", "{", "}", ","];

fn random_token<R: Rng>(rng: &mut R) -> GenTok {
    match rng.gen_range(0..100) {
        0..=34 => GenTok::Word(WORDS.choose(rng).unwrap().to_string()),
        35..=44 => GenTok::Word(INTS.choose(rng).unwrap().to_string()),
        45..=97 => GenTok::Sym(SYMS.choose(rng).unwrap()),
        _ => GenTok::Bad(*['?', '>', '(', '#'].choose(rng).unwrap()),
    }
}

/// Grammar-shaped random AST. `depth` bounds nesting.
pub fn random_ast<R: Rng>(rng: &mut R, depth: usize) -> PipelineAst {
    random_pipeline(rng, depth)
}

fn random_name<R: Rng>(rng: &mut R) -> String {
    const NAMES: &[&str] = &["a", "b", "bm25-c1", "rrf", "x.y_2", "gen", "RRF", "rank1", "9z"];
    NAMES.choose(rng).unwrap().to_string()
}

fn random_pipeline<R: Rng>(rng: &mut R, depth: usize) -> PipelineAst {
    let n = if depth == 0 { 1 } else { rng.gen_range(1..=3) };
    let mut stages: Vec<_> = (0..n).map(|_| random_stage(rng, depth)).collect();
    if stages.len() == 1 {
        stages.pop().unwrap()
    } else {
        PipelineAst::Sequence(stages)
    }
}

fn random_stage<R: Rng>(rng: &mut R, depth: usize) -> PipelineAst {
    let unit = if depth > 0 && rng.gen_bool(0.35) {
        let branches = (0..rng.gen_range(1..=3))
            .map(|_| random_pipeline(rng, depth - 1))
            .collect();
        let generator = rng.gen_bool(0.3).then(|| random_name(rng));
        PipelineAst::Parallel {
            generator,
            branches,
            fuser: random_name(rng),
        }
    } else {
        PipelineAst::Service(random_name(rng))
    };
    if rng.gen_bool(0.3) {
        PipelineAst::limit(unit, rng.gen_range(1..=200))
    } else {
        unit
    }
}

/// Splits a whitespace-free canonical pipeline string into generated tokens.
pub fn split_canonical(s: &str) -> Vec<GenTok> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        let sym = match c {
            '>' => {
                assert_eq!(chars.next(), Some('>'));
                Some(">>")
            }
            '%' => Some("%"),
            '{' => Some("{"),
            '}' => Some("}"),
            ',' => Some(","),
            _ => None,
        };
        match sym {
            Some(s) => {
                if !word.is_empty() {
                    out.push(GenTok::Word(std::mem::take(&mut word)));
                }
                out.push(GenTok::Sym(s));
            }
            None => word.push(c),
        }
    }
    if !word.is_empty() {
        out.push(GenTok::Word(word));
    }
    out
}

/// A mix of pure-random token strings and mutated valid pipelines, each at
/// most `max_tokens` long.
pub fn token_corpus<R: Rng>(rng: &mut R, count: usize, max_tokens: usize) -> Vec<Vec<GenTok>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let toks = match rng.gen_range(0..3) {
            0 => (0..rng.gen_range(1..=max_tokens)).map(|_| random_token(rng)).collect(),
            _ => {
                let depth = rng.gen_range(0..=3);
                let ast = random_ast(rng, depth);
                let mut toks = split_canonical(&pipeserve_core::pipeline::unparse(&ast));
                // mutate about half of them into near misses
                if rng.gen_bool(0.5) && !toks.is_empty() {
                    let i = rng.gen_range(0..toks.len());
                    match rng.gen_range(0..3) {
                        0 => {
                            toks.remove(i);
                        }
                        1 => toks.insert(i, random_token(rng)),
                        _ => toks[i] = random_token(rng),
                    }
                }
                toks
            }
        };
        if !toks.is_empty() && toks.len() <= max_tokens {
            out.push(toks);
        }
    }
    out
}
