# Package marker so modules import as 'from src.corpus import ...'
