use std::fmt;

/// Parse tree of a pipeline string.
///
/// Trees produced by the parser keep a grammar-shaped form: a `Limit` child is
/// a `Service` or `Parallel`, `Sequence` has at least two stages and never
/// directly contains another `Sequence`, and `Parallel` has at least one
/// branch. [`unparse`] round-trips exactly the trees of that form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PipelineAst {
    Service(String),
    Limit {
        child: Box<PipelineAst>,
        k: usize,
    },
    Sequence(Vec<PipelineAst>),
    Parallel {
        generator: Option<String>,
        branches: Vec<PipelineAst>,
        fuser: String,
    },
}

impl PipelineAst {
    pub fn service(name: impl Into<String>) -> Self {
        PipelineAst::Service(name.into())
    }

    pub fn limit(child: PipelineAst, k: usize) -> Self {
        PipelineAst::Limit {
            child: Box::new(child),
            k,
        }
    }

    pub fn parallel(generator: Option<&str>, branches: Vec<PipelineAst>, fuser: &str) -> Self {
        PipelineAst::Parallel {
            generator: generator.map(str::to_string),
            branches,
            fuser: fuser.to_string(),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            PipelineAst::Service(_) => 1,
            PipelineAst::Limit { child, .. } => 1 + child.size(),
            PipelineAst::Sequence(stages) => 1 + stages.iter().map(Self::size).sum::<usize>(),
            PipelineAst::Parallel { branches, .. } => 1 + branches.iter().map(Self::size).sum::<usize>(),
        }
    }
}

/// Canonical, whitespace-free rendering. Used for cache keys and `served_by`.
pub fn unparse(ast: &PipelineAst) -> String {
    let mut out = String::new();
    write_ast(ast, &mut out);
    out
}

fn write_ast(ast: &PipelineAst, out: &mut String) {
    match ast {
        PipelineAst::Service(name) => out.push_str(name),
        PipelineAst::Limit { child, k } => {
            write_ast(child, out);
            out.push('%');
            out.push_str(&k.to_string());
        }
        PipelineAst::Sequence(stages) => {
            for (i, stage) in stages.iter().enumerate() {
                if i > 0 {
                    out.push_str(">>");
                }
                write_ast(stage, out);
            }
        }
        PipelineAst::Parallel {
            generator,
            branches,
            fuser,
        } => {
            if let Some(g) = generator {
                out.push_str(g);
            }
            out.push('{');
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_ast(b, out);
            }
            out.push('}');
            out.push_str(fuser);
        }
    }
}

impl fmt::Display for PipelineAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&unparse(self))
    }
}
